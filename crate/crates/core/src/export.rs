//! Text and image dumps of kernels, channels and head parameters.
//!
//! Grids are written as headerless CSV (one grid row per line) or as binary
//! 8-bit PGM (`P5`).

use std::fmt::{Display, Write as _};

use crate::grid::Grid;
use crate::metric_head::FirstLayer;

/// Headerless CSV, one line per grid row.
pub fn grid_csv<T: Display>(grid: &Grid<T>) -> String {
    let mut s = String::new();
    for r in 0..grid.rows() {
        for (c, v) in grid.row(r).iter().enumerate() {
            if c > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

/// Binary greymap (`P5`, maxval 255).
pub fn pgm(grid: &Grid<u8>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.cols(), grid.rows()).into_bytes();
    out.extend_from_slice(grid.as_slice());
    out
}

/// Rounds real cells to the nearest integer and clamps them into `[0, 255]`.
pub fn to_gray(grid: &Grid<f64>) -> Grid<u8> {
    grid.map(|&v| {
        if v.is_nan() {
            0
        } else {
            v.round().clamp(0.0, 255.0) as u8
        }
    })
}

/// Maps signed weights onto grey levels: the most negative weight (by
/// magnitude) becomes black, zero mid-grey, the most positive white.
pub fn weights_to_gray(weights: &Grid<f64>) -> Grid<u8> {
    let peak = weights
        .as_slice()
        .iter()
        .fold(0.0_f64, |m, &w| m.max(w.abs()));
    if peak == 0.0 {
        return weights.map(|_| 128);
    }
    weights.map(|&w| ((w / peak + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8)
}

/// Class-by-class table of first-layer thresholds; row `n1`, column `n2`.
/// The diagonal has no neuron and is left empty.
pub fn thresholds_csv(first: &FirstLayer) -> String {
    let mut s = String::from("n1\\n2");
    for n2 in 0..first.classes {
        let _ = write!(s, ",{n2}");
    }
    s.push('\n');
    for n1 in 0..first.classes {
        let _ = write!(s, "{n1}");
        for n2 in 0..first.classes {
            s.push(',');
            if let Some(t) = first.threshold(n1, n2) {
                let _ = write!(s, "{t}");
            }
        }
        s.push('\n');
    }
    s
}

/// One line per image: index, label (empty when unknown), predicted class,
/// then the second-layer score of every class.
pub fn scores_csv<'a>(rows: impl IntoIterator<Item = (usize, Option<u8>, usize, &'a [i32])>) -> String {
    let mut s = String::new();
    let mut header_done = false;
    for (index, label, class, scores) in rows {
        if !header_done {
            s.push_str("index,label,predicted");
            for k in 0..scores.len() {
                let _ = write!(s, ",net_{k}");
            }
            s.push('\n');
            header_done = true;
        }
        let _ = write!(s, "{index},");
        if let Some(l) = label {
            let _ = write!(s, "{l}");
        }
        let _ = write!(s, ",{class}");
        for v in scores {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_and_columns() {
        let g = Grid::from_vec(2, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(grid_csv(&g), "1,2,3\n4,5,6\n");
    }

    #[test]
    fn pgm_header_and_payload() {
        let g = Grid::from_vec(2, 3, vec![0u8, 1, 2, 3, 4, 255]).unwrap();
        let bytes = pgm(&g);
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 1, 2, 3, 4, 255]);
    }

    #[test]
    fn gray_clamps_and_rounds() {
        let g = Grid::from_vec(1, 5, vec![-3.0, 0.4, 127.5, 369.0, f64::NAN]).unwrap();
        assert_eq!(to_gray(&g).as_slice(), &[0, 0, 128, 255, 0]);
    }

    #[test]
    fn weights_map_symmetrically() {
        let g = Grid::from_vec(1, 3, vec![-2.0, 0.0, 2.0]).unwrap();
        assert_eq!(weights_to_gray(&g).as_slice(), &[0, 128, 255]);
        let flat = Grid::filled(2, 2, 0.0);
        assert!(weights_to_gray(&flat).as_slice().iter().all(|&v| v == 128));
    }

    #[test]
    fn scores_csv_leaves_missing_label_empty() {
        let a = [1, -2];
        let b = [0, 3];
        let s = scores_csv([(4, Some(7), 0, &a[..]), (5, None, 1, &b[..])]);
        assert_eq!(s, "index,label,predicted,net_0,net_1\n4,7,0,1,-2\n5,,1,0,3\n");
    }
}
