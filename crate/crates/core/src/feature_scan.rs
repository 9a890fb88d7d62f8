//! Binary feature channels: boundary detection on exemplar images and on
//! real channels, thinning, pooling and the 5×5 window convolution that
//! aligns feature coordinates with the next layer's output grid.
//!
//! A feature at `(r, c)` names the 5×5 window whose upper-left corner is
//! `(r, c)`. The "central 2×2" of that window is rows `r+2..=r+3`, cols
//! `c+2..=c+3` everywhere in this crate.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mnist_io::BinaryImage;

pub const KERNEL_SIZE: usize = 5;
/// Offset of the central 2×2 inside a 5×5 window.
pub const CENTER_OFFSET: usize = 2;

/// Which image a channel or feature belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Owner {
    Exemplar(usize),
    Merged,
}

impl Owner {
    pub fn exemplar(self) -> Option<usize> {
        match self {
            Owner::Exemplar(e) => Some(e),
            Owner::Merged => None,
        }
    }
}

/// Upper-left corner of a 5×5 patch that seeded a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeaturePoint {
    pub row: usize,
    pub col: usize,
    pub owner: Owner,
}

/// Binary grid of feature marks. `stage` is the convolutional layer it feeds.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureChannel {
    pub cells: Grid<u8>,
    pub owner: Owner,
    pub stage: u8,
}

impl FeatureChannel {
    pub fn count(&self) -> usize {
        self.cells.as_slice().iter().filter(|&&v| v == 1).count()
    }

    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells
            .iter_indexed()
            .filter(|(_, _, &v)| v == 1)
            .map(|(r, c, _)| (r, c))
    }

    fn with_cells(&self, cells: Grid<u8>) -> FeatureChannel {
        FeatureChannel {
            cells,
            owner: self.owner,
            stage: self.stage,
        }
    }
}

fn valid_extent(n: usize) -> Result<usize> {
    n.checked_sub(KERNEL_SIZE - 1)
        .filter(|&m| m > 0)
        .ok_or(Error::OutOfBounds {
            row: 0,
            col: 0,
            rows: n,
            cols: n,
        })
}

/// Marks 5×5 windows, visited every `step` pixels, whose central 2×2 holds
/// both a background (0) and a foreground (255) pixel.
///
/// The output keeps full `(28-4)×(28-4)` resolution; cells the scan does not
/// visit stay 0.
pub fn scan_boundary_features(img: &BinaryImage, step: usize, owner: Owner) -> FeatureChannel {
    assert!(step >= 1, "scan step must be positive");
    let px = &img.pixels;
    let rows = px.rows() + 1 - KERNEL_SIZE;
    let cols = px.cols() + 1 - KERNEL_SIZE;
    let mut cells = Grid::zeros(rows, cols);
    for r in (0..rows).step_by(step) {
        for c in (0..cols).step_by(step) {
            let (mut has_bg, mut has_fg) = (false, false);
            for dr in 0..2 {
                for dc in 0..2 {
                    match px[(r + CENTER_OFFSET + dr, c + CENTER_OFFSET + dc)] {
                        0 => has_bg = true,
                        _ => has_fg = true,
                    }
                }
            }
            if has_bg && has_fg {
                cells[(r, c)] = 1;
            }
        }
    }
    FeatureChannel {
        cells,
        owner,
        stage: 1,
    }
}

/// Marks every positive cell of a post-ReLU channel.
pub fn build_feature_channel(real: &Grid<f64>, owner: Owner, stage: u8) -> FeatureChannel {
    FeatureChannel {
        cells: real.map(|&v| u8::from(v > 0.0)),
        owner,
        stage,
    }
}

/// Drops marks whose real value is below `min_value`, then keeps marks in
/// row-major order, discarding any within Chebyshev distance `< min_distance`
/// of an already kept mark.
pub fn thin_features(
    fc: &FeatureChannel,
    real: &Grid<f64>,
    min_value: f64,
    min_distance: usize,
) -> Result<FeatureChannel> {
    if fc.cells.dims() != real.dims() {
        return Err(Error::Dimension {
            expected: fc.cells.dims(),
            found: real.dims(),
        });
    }
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for (r, c) in fc.points() {
        if real[(r, c)] < min_value {
            continue;
        }
        let crowded = kept
            .iter()
            .any(|&(kr, kc)| r.abs_diff(kr).max(c.abs_diff(kc)) < min_distance);
        if !crowded {
            kept.push((r, c));
        }
    }
    let mut cells = Grid::zeros(fc.cells.rows(), fc.cells.cols());
    for (r, c) in kept {
        cells[(r, c)] = 1;
    }
    Ok(fc.with_cells(cells))
}

/// 2×2 stride-2 pooling of a binary grid: a block yields 1 if it holds any 1.
pub fn pool_feature_channel(fc: &FeatureChannel) -> Result<FeatureChannel> {
    let (rows, cols) = fc.cells.dims();
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(Error::OddDimensions { rows, cols });
    }
    let cells = Grid::from_fn(rows / 2, cols / 2, |r, c| {
        let src = &fc.cells;
        src[(2 * r, 2 * c)]
            | src[(2 * r, 2 * c + 1)]
            | src[(2 * r + 1, 2 * c)]
            | src[(2 * r + 1, 2 * c + 1)]
    });
    Ok(fc.with_cells(cells))
}

/// Slides a 5×5 window (stride 1) over the channel; the output cell is 1 if
/// the window's central 2×2 holds at least one 1. Shrinks each side by 4, so
/// 12×12 becomes 8×8 and 24×24 becomes 20×20.
pub fn convolve_feature_channel(fc: &FeatureChannel) -> Result<FeatureChannel> {
    let src = &fc.cells;
    let rows = valid_extent(src.rows())?;
    let cols = valid_extent(src.cols())?;
    let cells = Grid::from_fn(rows, cols, |r, c| {
        let (a, b) = (r + CENTER_OFFSET, c + CENTER_OFFSET);
        src[(a, b)] | src[(a, b + 1)] | src[(a + 1, b)] | src[(a + 1, b + 1)]
    });
    Ok(fc.with_cells(cells))
}
