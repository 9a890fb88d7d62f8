//! Fully-connected head implementing nearest-neighbour comparison over the
//! final convolutional channels.
//!
//! Each exemplar's channels are spread into a "zero layer" weight table where
//! a cell takes the strongest `(p / 1000) / (1 + d²)` contribution from any
//! source cell. One first-layer neuron per ordered exemplar pair `(n1, n2)`
//! weighs the difference of the two tables and fires when the input sits on
//! `n1`'s side of the midpoint between the two exemplars. Second-layer
//! neuron `k` counts the comparisons class `k` won.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// `w0[e][k]`: zero-layer table for exemplar `e`, channel `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroLayerWeights {
    pub tables: Vec<Vec<Grid<f64>>>,
}

/// Pairwise comparison neurons, stored for every ordered pair `n1 != n2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstLayer {
    pub classes: usize,
    pub pairs: Vec<(usize, usize)>,
    /// `[pair][channel]`.
    pub weights: Vec<Vec<Grid<f64>>>,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondLayer {
    /// `[class][pair]`, 1 where the pair's first member is the class.
    pub weights: Vec<Vec<u8>>,
    pub threshold: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricHead {
    pub first: FirstLayer,
    pub second: SecondLayer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub class: usize,
    /// Second-layer net input per class: comparisons won minus `classes - 1`.
    pub scores: Vec<i32>,
}

/// Ordered pairs `(n1, n2)`, `n1 != n2`, with `n1` as the outer loop.
pub fn ordered_pairs(classes: usize) -> Vec<(usize, usize)> {
    (0..classes)
        .flat_map(|a| (0..classes).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect()
}

/// Contribution of a source cell holding `value` to a cell at squared
/// distance `dist2`.
#[inline]
pub fn field_strength(value: f64, dist2: usize) -> f64 {
    (value / 1000.0) / (1.0 + dist2 as f64)
}

fn zero_layer_table(channel: &Grid<f64>) -> Grid<f64> {
    let sources: Vec<(usize, usize, f64)> = channel
        .iter_indexed()
        .filter(|(_, _, &v)| v > 0.0)
        .map(|(r, c, &v)| (r, c, v))
        .collect();
    Grid::from_fn(channel.rows(), channel.cols(), |i, j| {
        sources.iter().fold(0.0, |best: f64, &(r, c, v)| {
            let d2 = i.abs_diff(r).pow(2) + j.abs_diff(c).pow(2);
            best.max(field_strength(v, d2))
        })
    })
}

/// Zero-layer tables for every exemplar's final channels (`[exemplar][channel]`).
pub fn compute_zero_layer(channels: &[Vec<Grid<f64>>]) -> ZeroLayerWeights {
    ZeroLayerWeights {
        tables: channels
            .iter()
            .map(|chs| chs.iter().map(zero_layer_table).collect())
            .collect(),
    }
}

fn check_stack(expected: &[Grid<f64>], found: &[Grid<f64>]) -> Result<()> {
    if expected.len() != found.len() {
        return Err(Error::ChannelCount {
            expected: expected.len(),
            found: found.len(),
        });
    }
    for (a, b) in expected.iter().zip(found) {
        if a.dims() != b.dims() {
            return Err(Error::Dimension {
                expected: a.dims(),
                found: b.dims(),
            });
        }
    }
    Ok(())
}

/// `Σ_k Σ_ij p[k][i][j] · w[k][i][j]`.
pub fn state(channels: &[Grid<f64>], weights: &[Grid<f64>]) -> f64 {
    sparse_state(&nonzero_cells(channels), weights)
}

/// Positions and values of the non-zero cells of each channel.
fn nonzero_cells(channels: &[Grid<f64>]) -> Vec<Vec<(usize, f64)>> {
    channels
        .iter()
        .map(|p| {
            p.as_slice()
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect()
        })
        .collect()
}

/// [`state`] over pre-extracted non-zero cells; zero cells add nothing.
fn sparse_state(cells: &[Vec<(usize, f64)>], weights: &[Grid<f64>]) -> f64 {
    cells
        .iter()
        .zip(weights)
        .map(|(nz, w)| {
            let w = w.as_slice();
            nz.iter().map(|&(i, v)| v * w[i]).sum::<f64>()
        })
        .sum()
}

/// Differences of zero-layer tables per pair, with thresholds at the
/// midpoint of the two exemplars' own states.
pub fn compute_first_layer(w0: &ZeroLayerWeights, channels: &[Vec<Grid<f64>>]) -> Result<FirstLayer> {
    let classes = channels.len();
    if classes < 2 {
        return Err(Error::Config("at least two exemplars are required".into()));
    }
    if w0.tables.len() != classes {
        return Err(Error::ChannelCount {
            expected: classes,
            found: w0.tables.len(),
        });
    }
    for (tables, chs) in w0.tables.iter().zip(channels) {
        check_stack(&channels[0], chs)?;
        check_stack(&channels[0], tables)?;
    }

    let pairs = ordered_pairs(classes);
    let mut weights = Vec::with_capacity(pairs.len());
    let mut thresholds = Vec::with_capacity(pairs.len());
    for &(n1, n2) in &pairs {
        let diff: Vec<Grid<f64>> = w0.tables[n1]
            .iter()
            .zip(&w0.tables[n2])
            .map(|(a, b)| {
                Grid::from_vec(
                    a.rows(),
                    a.cols(),
                    a.as_slice()
                        .iter()
                        .zip(b.as_slice())
                        .map(|(x, y)| x - y)
                        .collect(),
                )
                .expect("same dims")
            })
            .collect();
        let s1 = state(&channels[n1], &diff);
        let s2 = state(&channels[n2], &diff);
        thresholds.push(-(s1 + s2) / 2.0);
        weights.push(diff);
    }
    Ok(FirstLayer {
        classes,
        pairs,
        weights,
        thresholds,
    })
}

impl FirstLayer {
    pub fn neuron_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn pair_index(&self, n1: usize, n2: usize) -> Option<usize> {
        self.pairs.iter().position(|&p| p == (n1, n2))
    }

    pub fn threshold(&self, n1: usize, n2: usize) -> Option<f64> {
        self.pair_index(n1, n2).map(|i| self.thresholds[i])
    }

    /// Channel count and grid dimensions each input must have.
    pub fn input_shape(&self) -> (usize, (usize, usize)) {
        let first = &self.weights[0];
        (first.len(), first.first().map(Grid::dims).unwrap_or((0, 0)))
    }

    /// `S + Wh` for every pair, in pair order.
    pub fn pre_activations(&self, input: &[Grid<f64>]) -> Result<Vec<f64>> {
        check_stack(&self.weights[0], input)?;
        let cells = nonzero_cells(input);
        Ok(self
            .weights
            .iter()
            .zip(&self.thresholds)
            .map(|(w, &wh)| sparse_state(&cells, w) + wh)
            .collect())
    }
}

pub fn build_second_layer(classes: usize, pairs: &[(usize, usize)]) -> SecondLayer {
    SecondLayer {
        weights: (0..classes)
            .map(|k| pairs.iter().map(|&(n1, _)| u8::from(n1 == k)).collect())
            .collect(),
        threshold: -(classes as i32 - 1),
    }
}

impl MetricHead {
    /// Builds the head from each exemplar's final channels (`[exemplar][channel]`).
    pub fn build(channels: &[Vec<Grid<f64>>]) -> Result<MetricHead> {
        let w0 = compute_zero_layer(channels);
        let first = compute_first_layer(&w0, channels)?;
        let second = build_second_layer(first.classes, &first.pairs);
        Ok(MetricHead { first, second })
    }

    pub fn classes(&self) -> usize {
        self.first.classes
    }

    /// A comparison neuron fires when its pre-activation is strictly
    /// positive. The class with the largest second-layer net wins; ties go
    /// to the lowest class index.
    pub fn classify(&self, input: &[Grid<f64>]) -> Result<Classification> {
        let pre = self.first.pre_activations(input)?;
        let fired: Vec<i32> = pre.iter().map(|&v| i32::from(v > 0.0)).collect();
        let scores: Vec<i32> = self
            .second
            .weights
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&fired)
                    .map(|(&w, &f)| i32::from(w) * f)
                    .sum::<i32>()
                    + self.second.threshold
            })
            .collect();
        let class = scores
            .iter()
            .enumerate()
            .fold(0, |best, (k, &s)| if s > scores[best] { k } else { best });
        Ok(Classification { class, scores })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force_table(p: &Grid<f64>) -> Grid<f64> {
        let mut out = Grid::zeros(p.rows(), p.cols());
        for i in 0..p.rows() {
            for j in 0..p.cols() {
                let mut best = 0.0f64;
                for il in 0..p.rows() {
                    for jl in 0..p.cols() {
                        let di = i as f64 - il as f64;
                        let dj = j as f64 - jl as f64;
                        let v = (p[(il, jl)] / 1000.0) / (1.0 + di * di + dj * dj);
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[(i, j)] = best;
            }
        }
        out
    }

    #[test]
    fn worked_example() {
        let mut ch = Grid::zeros(8, 8);
        ch[(4, 1)] = 162.0;
        let t = zero_layer_table(&ch);
        assert_eq!(t[(6, 2)], 0.162 / 6.0);
        assert!((t[(6, 2)] - 0.027).abs() < 1e-15);
        assert_eq!(t[(4, 1)], 0.162);
    }

    /// Channel 0 of exemplar "0" as printed for the zero-layer example; the
    /// printed table is rounded to four significant digits.
    #[test]
    fn printed_zero_layer_rows() {
        let rows: [[f64; 8]; 8] = [
            [195., 254., 254., 243., 173., 58., 0., 0.],
            [195., 243., 243., 232., 162., 48., 0., 0.],
            [147., 147., 147., 136., 66., 0., 0., 0.],
            [32., 32., 32., 51., 29., 29., 29., 29.],
            [21., 21., 51., 117., 107., 107., 107., 77.],
            [0., 0., 29., 107., 107., 107., 107., 77.],
            [0., 0., 29., 107., 107., 107., 107., 77.],
            [0., 0., 29., 107., 107., 107., 107., 77.],
        ];
        let ch = Grid::from_fn(8, 8, |r, c| rows[r][c]);
        let t = zero_layer_table(&ch);
        let printed_row0 = [0.195, 0.254, 0.254, 0.243, 0.173, 0.0865, 0.0346, 0.0173];
        for (c, &v) in printed_row0.iter().enumerate() {
            assert!((t[(0, c)] - v).abs() < 5e-5, "col {c}: {} vs {v}", t[(0, c)]);
        }
        assert!((t[(3, 0)] - 0.0735).abs() < 5e-5);
        assert!((t[(7, 0)] - 0.0107).abs() < 5e-5);
    }

    #[test]
    fn zero_channel_zero_table() {
        let t = zero_layer_table(&Grid::zeros(8, 8));
        assert!(t.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn head_shape_for_ten_classes() {
        let chans: Vec<Vec<Grid<f64>>> = (0..10)
            .map(|e| vec![Grid::from_fn(8, 8, |r, c| ((r * 8 + c + e * 7) % 13) as f64 * 20.0)])
            .collect();
        let head = MetricHead::build(&chans).unwrap();
        assert_eq!(head.first.neuron_count(), 90);
        assert_eq!(head.second.threshold, -9);
        let ones: usize = head
            .second
            .weights
            .iter()
            .map(|row| row.iter().filter(|&&w| w == 1).count())
            .sum();
        assert_eq!(ones, 90);
        assert!(head
            .second
            .weights
            .iter()
            .all(|row| row.iter().filter(|&&w| w == 1).count() == 9));
    }

    #[test]
    fn identical_exemplars_are_indistinguishable() {
        let ch = Grid::from_fn(8, 8, |r, c| (r * c) as f64);
        let chans = vec![vec![ch.clone()], vec![ch]];
        let head = MetricHead::build(&chans).unwrap();
        assert!(head.first.weights[0][0].as_slice().iter().all(|&w| w == 0.0));
        assert_eq!(head.first.thresholds, vec![0.0, 0.0]);
        let out = head.classify(&chans[0]).unwrap();
        assert_eq!(out.scores, vec![-1, -1]);
        assert_eq!(out.class, 0);
    }

    #[test]
    fn exemplars_win_all_comparisons() {
        let chans: Vec<Vec<Grid<f64>>> = (0..4)
            .map(|e| {
                let mut g = Grid::zeros(8, 8);
                g[(e * 2, e * 2)] = 255.0;
                vec![g]
            })
            .collect();
        let head = MetricHead::build(&chans).unwrap();
        for (e, ch) in chans.iter().enumerate() {
            let out = head.classify(ch).unwrap();
            assert_eq!(out.class, e);
            assert_eq!(out.scores[e], 0);
        }
    }

    #[test]
    fn blank_input_depends_on_threshold_signs() {
        let chans: Vec<Vec<Grid<f64>>> = (0..3)
            .map(|e| vec![Grid::from_fn(6, 6, |r, c| if r == e { 100.0 + c as f64 } else { 0.0 })])
            .collect();
        let head = MetricHead::build(&chans).unwrap();
        let blank = vec![Grid::zeros(6, 6)];
        let out = head.classify(&blank).unwrap();
        let pre = head.first.pre_activations(&blank).unwrap();
        assert_eq!(pre, head.first.thresholds);
        let expected: Vec<i32> = (0..3)
            .map(|k| {
                head.first
                    .pairs
                    .iter()
                    .zip(&pre)
                    .filter(|(&(n1, _), &v)| n1 == k && v > 0.0)
                    .count() as i32
                    - 2
            })
            .collect();
        assert_eq!(out.scores, expected);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let chans = vec![vec![Grid::zeros(8, 8)], vec![Grid::filled(8, 8, 1.0)]];
        let head = MetricHead::build(&chans).unwrap();
        assert!(head.classify(&[Grid::zeros(7, 8)]).is_err());
        assert!(head.classify(&[Grid::zeros(8, 8), Grid::zeros(8, 8)]).is_err());
    }

    fn small_channel() -> impl Strategy<Value = Grid<f64>> {
        proptest::collection::vec(prop_oneof![Just(0.0), 0.0f64..400.0], 9)
            .prop_map(|v| Grid::from_vec(3, 3, v).unwrap())
    }

    proptest! {
        #[test]
        fn zero_layer_matches_brute_force(ch in small_channel()) {
            prop_assert_eq!(zero_layer_table(&ch), brute_force_table(&ch));
        }

        #[test]
        fn antisymmetry_and_complementarity(
            chans in proptest::collection::vec(proptest::collection::vec(small_channel(), 2), 2..5),
            input in proptest::collection::vec(small_channel(), 2),
        ) {
            let head = MetricHead::build(&chans).unwrap();
            let first = &head.first;
            let pre = first.pre_activations(&input).unwrap();
            for (idx, &(a, b)) in first.pairs.iter().enumerate() {
                let rev = first.pair_index(b, a).unwrap();
                let (t1, t2) = (first.thresholds[idx], first.thresholds[rev]);
                prop_assert!((t1 + t2).abs() <= 1e-9 * t1.abs().max(1.0));
                for (wa, wb) in first.weights[idx].iter().zip(&first.weights[rev]) {
                    for (x, y) in wa.as_slice().iter().zip(wb.as_slice()) {
                        prop_assert!((x + y).abs() <= 1e-9 * x.abs().max(1e-12));
                    }
                }
                prop_assert!((pre[idx] + pre[rev]).abs() <= 1e-9 * pre[idx].abs().max(1.0));
                prop_assert!(!(pre[idx] > 0.0 && pre[rev] > 0.0));
            }
        }
    }
}
