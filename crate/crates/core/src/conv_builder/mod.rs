//! Kernel synthesis and the convolution arithmetic shared by construction
//! and inference.
//!
//! A kernel is read straight off the patch it was found in: pixel `p` maps
//! to weight `2p/max - 1`. The kernel is then rescaled so that its response
//! to that same patch is exactly [`MAIN_RESPONSE`].

mod build;

pub use build::{build_convnet, final_channels, layer2_inputs, ConvNet};

use crate::error::{Error, Result};
use crate::feature_scan::{FeaturePoint, Owner, KERNEL_SIZE};
use crate::grid::Grid;
use crate::mnist_io::BinaryImage;

pub const MAX_PIXEL: f64 = 255.0;
/// Target response of a kernel to its own source patch.
pub const MAIN_RESPONSE: f64 = 255.0;
pub const SCAN_STEP: usize = 2;
const TAPS: usize = KERNEL_SIZE * KERNEL_SIZE;

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    /// Bias as a percentage of the kernel's response to its own patch, in (0, 100].
    pub k_percent: f64,
    pub use_pooling: bool,
    /// Keep separate channels per exemplar instead of one max-merged set.
    pub use_image_channels: bool,
    pub thin_min_value: f64,
    pub thin_min_distance: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig::pooled_image_channels()
    }
}

impl BuildConfig {
    /// Per-exemplar channels with 2×2 pooling, K = 40.
    pub fn pooled_image_channels() -> Self {
        BuildConfig {
            k_percent: 40.0,
            use_pooling: true,
            use_image_channels: true,
            thin_min_value: 127.0,
            thin_min_distance: 5,
        }
    }

    /// Per-exemplar channels without pooling, K = 40.
    pub fn unpooled_image_channels() -> Self {
        BuildConfig {
            use_pooling: false,
            ..BuildConfig::pooled_image_channels()
        }
    }

    /// Max-merged channels without pooling, K = 30.
    pub fn unpooled_merged() -> Self {
        BuildConfig {
            k_percent: 30.0,
            use_pooling: false,
            use_image_channels: false,
            ..BuildConfig::pooled_image_channels()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_percent > 0.0 && self.k_percent <= 100.0) {
            return Err(Error::Config(format!(
                "K must lie in (0, 100], got {}",
                self.k_percent
            )));
        }
        if !self.thin_min_value.is_finite() {
            return Err(Error::Config("thinning threshold must be finite".into()));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!(
            "{}/{}/K={}",
            if self.use_image_channels { "image-channels" } else { "merged" },
            if self.use_pooling { "pooling" } else { "no-pooling" },
            self.k_percent
        )
    }
}

/// Post-ReLU neuron states of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RealChannel {
    pub cells: Grid<f64>,
    pub owner: Owner,
    pub layer: u8,
    pub kernel_index: usize,
}

/// First-layer 5×5 kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub weights: Grid<f64>,
    pub bias: f64,
    pub source: FeaturePoint,
}

/// Second-layer kernel with one 5×5 slice per input channel. Weights are
/// stored slice-major, then row-major within a slice.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiKernel {
    pub weights: Vec<f64>,
    pub channels: usize,
    pub bias: f64,
    pub source: FeaturePoint,
}

impl MultiKernel {
    pub fn slice(&self, m: usize) -> &[f64] {
        &self.weights[m * TAPS..(m + 1) * TAPS]
    }
}

/// Outcome of rescaling a freshly synthesized kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Correction {
    Accepted {
        weights: Vec<f64>,
        bias: f64,
        /// The divisor `t` applied to every weight.
        scale: f64,
    },
    /// The kernel's response to its own patch is not positive.
    Skip { main_response: f64 },
}

#[inline]
pub fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `w = 2p / max_pixel - 1` for every value of the patch.
pub fn synth_kernel(patch: &[f64], max_pixel: f64) -> Result<Vec<f64>> {
    if !(max_pixel > 0.0) {
        return Err(Error::DegeneratePatch);
    }
    Ok(patch.iter().map(|&p| p * 2.0 / max_pixel - 1.0).collect())
}

/// `K · Σ p·w / 100`.
pub fn compute_bias(patch: &[f64], weights: &[f64], k_percent: f64) -> f64 {
    k_percent * dot(patch, weights) / 100.0
}

/// Divides the weights by `t = main / 255`, where `main` is the response to
/// the source patch, and recomputes the bias from the rescaled weights.
pub fn correct_kernel(weights: &[f64], patch: &[f64], k_percent: f64) -> Correction {
    let main_response = dot(patch, weights) - compute_bias(patch, weights, k_percent);
    if !(main_response > 0.0) {
        return Correction::Skip { main_response };
    }
    let scale = main_response / MAIN_RESPONSE;
    let weights: Vec<f64> = weights.iter().map(|w| w / scale).collect();
    let bias = compute_bias(patch, &weights, k_percent);
    Correction::Accepted {
        weights,
        bias,
        scale,
    }
}

/// Pixels of the 5×5 window at `(row, col)` as reals.
pub fn image_patch(img: &BinaryImage, row: usize, col: usize) -> Result<Vec<f64>> {
    let (rows, cols) = img.pixels.dims();
    if row + KERNEL_SIZE > rows || col + KERNEL_SIZE > cols {
        return Err(Error::OutOfBounds {
            row,
            col,
            rows,
            cols,
        });
    }
    let mut out = Vec::with_capacity(TAPS);
    for i in 0..KERNEL_SIZE {
        out.extend(
            img.pixels.row(row + i)[col..col + KERNEL_SIZE]
                .iter()
                .map(|&p| f64::from(p)),
        );
    }
    Ok(out)
}

/// Builds a first-layer kernel from the image window at `point`, or `None`
/// when the feature must be skipped.
pub fn make_layer1_kernel(
    img: &BinaryImage,
    point: FeaturePoint,
    k_percent: f64,
) -> Result<Option<ConvKernel>> {
    let patch = image_patch(img, point.row, point.col)?;
    let raw = synth_kernel(&patch, MAX_PIXEL)?;
    Ok(match correct_kernel(&raw, &patch, k_percent) {
        Correction::Accepted { weights, bias, .. } => Some(ConvKernel {
            weights: Grid::from_vec(KERNEL_SIZE, KERNEL_SIZE, weights).expect("5x5"),
            bias,
            source: point,
        }),
        Correction::Skip { .. } => None,
    })
}

impl ConvKernel {
    /// Pre-activation response at window `(row, col)` of `img`.
    pub fn response(&self, img: &BinaryImage, row: usize, col: usize) -> f64 {
        let w = self.weights.as_slice();
        let mut acc = 0.0;
        for i in 0..KERNEL_SIZE {
            let px = &img.pixels.row(row + i)[col..col + KERNEL_SIZE];
            for j in 0..KERNEL_SIZE {
                acc += f64::from(px[j]) * w[i * KERNEL_SIZE + j];
            }
        }
        acc - self.bias
    }
}

/// Stride-1 valid convolution of a binarized image followed by ReLU.
pub fn convolve_layer1(img: &BinaryImage, kernel: &ConvKernel) -> Grid<f64> {
    let rows = img.pixels.rows() + 1 - KERNEL_SIZE;
    let cols = img.pixels.cols() + 1 - KERNEL_SIZE;
    Grid::from_fn(rows, cols, |k, l| relu(kernel.response(img, k, l)))
}

/// 2×2 stride-2 max pooling.
pub fn max_pool(grid: &Grid<f64>) -> Result<Grid<f64>> {
    let (rows, cols) = grid.dims();
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(Error::OddDimensions { rows, cols });
    }
    Ok(Grid::from_fn(rows / 2, cols / 2, |r, c| {
        grid[(2 * r, 2 * c)]
            .max(grid[(2 * r, 2 * c + 1)])
            .max(grid[(2 * r + 1, 2 * c)])
            .max(grid[(2 * r + 1, 2 * c + 1)])
    }))
}

fn check_same_dims(channels: &[Grid<f64>]) -> Result<(usize, usize)> {
    let dims = channels.first().map(Grid::dims).unwrap_or((0, 0));
    if let Some(bad) = channels.iter().find(|c| c.dims() != dims) {
        return Err(Error::Dimension {
            expected: dims,
            found: bad.dims(),
        });
    }
    Ok(dims)
}

/// Stacks the 5×5 window at `(row, col)` of every channel, slice-major.
pub fn extract_multilayer_patch(channels: &[Grid<f64>], row: usize, col: usize) -> Result<Vec<f64>> {
    let (rows, cols) = check_same_dims(channels)?;
    if row + KERNEL_SIZE > rows || col + KERNEL_SIZE > cols {
        return Err(Error::OutOfBounds {
            row,
            col,
            rows,
            cols,
        });
    }
    let mut out = Vec::with_capacity(channels.len() * TAPS);
    for ch in channels {
        for i in 0..KERNEL_SIZE {
            out.extend_from_slice(&ch.row(row + i)[col..col + KERNEL_SIZE]);
        }
    }
    Ok(out)
}

/// Builds a second-layer kernel from a stacked patch. The bias is fixed at 0
/// and weights are read against a fixed maximum of 255.
pub fn synth_multikernel(patch: &[f64], source: FeaturePoint) -> Result<Option<MultiKernel>> {
    if patch.is_empty() || patch.len() % TAPS != 0 {
        return Err(Error::ChannelCount {
            expected: TAPS,
            found: patch.len(),
        });
    }
    let raw = synth_kernel(patch, MAX_PIXEL)?;
    Ok(match correct_kernel(&raw, patch, 0.0) {
        Correction::Accepted { weights, .. } => Some(MultiKernel {
            channels: patch.len() / TAPS,
            weights,
            bias: 0.0,
            source,
        }),
        Correction::Skip { .. } => None,
    })
}

impl MultiKernel {
    /// Pre-activation response to a stacked patch laid out like the weights.
    pub fn patch_response(&self, patch: &[f64]) -> f64 {
        dot(patch, &self.weights) - self.bias
    }
}

/// Multi-channel stride-1 valid convolution followed by ReLU.
pub fn convolve_layer2(channels: &[Grid<f64>], mk: &MultiKernel) -> Result<Grid<f64>> {
    if channels.len() != mk.channels {
        return Err(Error::ChannelCount {
            expected: mk.channels,
            found: channels.len(),
        });
    }
    let (rows, cols) = check_same_dims(channels)?;
    if rows < KERNEL_SIZE || cols < KERNEL_SIZE {
        return Err(Error::OutOfBounds {
            row: 0,
            col: 0,
            rows,
            cols,
        });
    }
    let out_rows = rows + 1 - KERNEL_SIZE;
    let out_cols = cols + 1 - KERNEL_SIZE;
    // Channels are mostly zero, so each non-zero input cell is scattered
    // into the outputs it reaches. Every output still receives its terms in
    // (channel, row, column) order, as a window-by-window sum would.
    let mut acc: Grid<f64> = Grid::zeros(out_rows, out_cols);
    for (m, ch) in channels.iter().enumerate() {
        let w = mk.slice(m);
        for r in 0..rows {
            let i_lo = r.saturating_sub(out_rows - 1);
            let i_hi = r.min(KERNEL_SIZE - 1);
            for (c, &v) in ch.row(r).iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let j_lo = c.saturating_sub(out_cols - 1);
                let j_hi = c.min(KERNEL_SIZE - 1);
                for i in i_lo..=i_hi {
                    for j in j_lo..=j_hi {
                        acc[(r - i, c - j)] += v * w[i * KERNEL_SIZE + j];
                    }
                }
            }
        }
    }
    Ok(acc.map(|&a| relu(a - mk.bias)))
}
