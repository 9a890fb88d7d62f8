//! Incremental construction of both convolutional layers.
//!
//! Features are visited exemplar by exemplar (class order), row-major within
//! each feature channel. Every accepted kernel is immediately convolved over
//! all exemplars; wherever the new channel is positive, the matching feature
//! marks are cleared, so later kernels only come from features that no
//! existing kernel already responds to.

use crate::error::Result;
use crate::feature_scan::{
    build_feature_channel, convolve_feature_channel, pool_feature_channel,
    scan_boundary_features, thin_features, FeatureChannel, FeaturePoint, Owner,
};
use crate::grid::Grid;
use crate::mnist_io::{BinaryImage, ExemplarSet};

use super::{
    convolve_layer1, convolve_layer2, extract_multilayer_patch, make_layer1_kernel, max_pool,
    synth_multikernel, BuildConfig, ConvKernel, MultiKernel, RealChannel, SCAN_STEP,
};

/// Everything produced while building the convolutional part.
///
/// Channel collections are indexed `[owner][kernel]`. With image channels
/// there is one owner per exemplar; the merged variant has a single owner.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet {
    pub config: BuildConfig,
    pub layer1_kernels: Vec<ConvKernel>,
    pub layer2_kernels: Vec<MultiKernel>,
    pub layer1_channels: Vec<Vec<RealChannel>>,
    /// Pooled layer-1 channels; empty when pooling is off.
    pub layer1_pooled: Vec<Vec<RealChannel>>,
    pub layer2_channels: Vec<Vec<RealChannel>>,
    /// Boundary scans of each exemplar, before any mark was consumed.
    pub layer1_features: Vec<FeatureChannel>,
    /// Thinned, pooled and window-convolved marks feeding layer 2.
    pub layer2_features: Vec<Vec<FeatureChannel>>,
    /// Marks a third layer would start from. No third layer is built.
    pub layer3_features: Vec<Vec<FeatureChannel>>,
    /// Features dropped because their kernel's self response was not positive.
    pub skipped: [usize; 2],
    pub warnings: Vec<String>,
}

impl ConvNet {
    pub fn owners(&self) -> Vec<Owner> {
        self.layer1_channels
            .iter()
            .map(|chs| chs.first().map(|c| c.owner).unwrap_or(Owner::Merged))
            .collect()
    }

    /// Stored channel count per layer: kernels × exemplars with image
    /// channels, kernels alone when merged.
    pub fn channel_counts(&self) -> [usize; 2] {
        [
            self.layer1_channels.iter().map(Vec::len).sum(),
            self.layer2_channels.iter().map(Vec::len).sum(),
        ]
    }

    /// Final channels per exemplar, when the build kept them.
    pub fn exemplar_final_channels(&self) -> Option<Vec<Vec<Grid<f64>>>> {
        self.config.use_image_channels.then(|| {
            self.layer2_channels
                .iter()
                .map(|chs| chs.iter().map(|c| c.cells.clone()).collect())
                .collect()
        })
    }
}

fn clear_where_positive(marks: &mut Grid<u8>, response: &Grid<f64>) {
    for (m, &v) in marks.as_mut_slice().iter_mut().zip(response.as_slice()) {
        if v > 0.0 {
            *m = 0;
        }
    }
}

/// Layer-1 marks for layer 2: positive cells, thinned when channels are kept
/// per exemplar, then pooled (if configured) and window-convolved.
fn layer2_marks(cfg: &BuildConfig, real: &Grid<f64>, owner: Owner) -> Result<FeatureChannel> {
    let mut fc = build_feature_channel(real, owner, 2);
    if cfg.use_image_channels {
        fc = thin_features(&fc, real, cfg.thin_min_value, cfg.thin_min_distance)?;
    }
    if cfg.use_pooling {
        fc = pool_feature_channel(&fc)?;
    }
    convolve_feature_channel(&fc)
}

fn layer3_marks(cfg: &BuildConfig, real: &Grid<f64>, owner: Owner) -> Result<FeatureChannel> {
    let fc = build_feature_channel(real, owner, 3);
    if cfg.use_image_channels {
        thin_features(&fc, real, cfg.thin_min_value, cfg.thin_min_distance)
    } else {
        Ok(fc)
    }
}

fn pointwise_max(acc: &mut Grid<f64>, other: &Grid<f64>) {
    for (a, &b) in acc.as_mut_slice().iter_mut().zip(other.as_slice()) {
        if b > *a {
            *a = b;
        }
    }
}

/// Layer-2 inputs from layer-1 channels: pooled when configured.
pub fn layer2_inputs(cfg: &BuildConfig, layer1: &[Grid<f64>]) -> Result<Vec<Grid<f64>>> {
    if cfg.use_pooling {
        layer1.iter().map(max_pool).collect()
    } else {
        Ok(layer1.to_vec())
    }
}

/// Runs one image through frozen kernels and returns its layer-2 channels.
///
/// Uses the same arithmetic as construction, so an exemplar reproduces its
/// stored channels exactly.
pub fn final_channels(
    cfg: &BuildConfig,
    layer1: &[ConvKernel],
    layer2: &[MultiKernel],
    img: &BinaryImage,
) -> Result<Vec<Grid<f64>>> {
    let l1: Vec<Grid<f64>> = layer1.iter().map(|k| convolve_layer1(img, k)).collect();
    let inputs = layer2_inputs(cfg, &l1)?;
    layer2.iter().map(|mk| convolve_layer2(&inputs, mk)).collect()
}

struct Layer1 {
    kernels: Vec<ConvKernel>,
    /// `[owner][kernel]`, full resolution.
    channels: Vec<Vec<Grid<f64>>>,
    /// `[owner][kernel]`, ready for layer-2 kernel search.
    marks: Vec<Vec<FeatureChannel>>,
    scans: Vec<FeatureChannel>,
    skipped: usize,
}

fn build_layer1(exemplars: &ExemplarSet, cfg: &BuildConfig) -> Result<Layer1> {
    let images = exemplars.images();
    let n = images.len();
    let scans: Vec<FeatureChannel> = images
        .iter()
        .enumerate()
        .map(|(e, img)| scan_boundary_features(img, SCAN_STEP, Owner::Exemplar(e)))
        .collect();
    let mut live: Vec<Grid<u8>> = scans.iter().map(|fc| fc.cells.clone()).collect();

    let owners = if cfg.use_image_channels { n } else { 1 };
    let mut layer = Layer1 {
        kernels: Vec::new(),
        channels: vec![Vec::new(); owners],
        marks: vec![Vec::new(); owners],
        scans: Vec::new(),
        skipped: 0,
    };

    for e in 0..n {
        let (rows, cols) = live[e].dims();
        for r in 0..rows {
            for c in 0..cols {
                if live[e][(r, c)] == 0 {
                    continue;
                }
                let point = FeaturePoint {
                    row: r,
                    col: c,
                    owner: Owner::Exemplar(e),
                };
                let Some(kernel) = make_layer1_kernel(&images[e], point, cfg.k_percent)? else {
                    live[e][(r, c)] = 0;
                    layer.skipped += 1;
                    continue;
                };
                live[e][(r, c)] = 0;
                let per_image: Vec<Grid<f64>> =
                    images.iter().map(|img| convolve_layer1(img, &kernel)).collect();
                for (marks, ch) in live.iter_mut().zip(&per_image) {
                    clear_where_positive(marks, ch);
                }
                if cfg.use_image_channels {
                    for (e2, ch) in per_image.into_iter().enumerate() {
                        layer.marks[e2].push(layer2_marks(cfg, &ch, Owner::Exemplar(e2))?);
                        layer.channels[e2].push(ch);
                    }
                } else {
                    let mut iter = per_image.into_iter();
                    let mut merged = iter.next().expect("at least two exemplars");
                    for ch in iter {
                        pointwise_max(&mut merged, &ch);
                    }
                    layer.marks[0].push(layer2_marks(cfg, &merged, Owner::Merged)?);
                    layer.channels[0].push(merged);
                }
                layer.kernels.push(kernel);
            }
        }
    }
    layer.scans = scans;
    Ok(layer)
}

struct Layer2 {
    kernels: Vec<MultiKernel>,
    channels: Vec<Vec<Grid<f64>>>,
    marks: Vec<Vec<FeatureChannel>>,
    skipped: usize,
}

fn build_layer2(
    cfg: &BuildConfig,
    inputs: &[Vec<Grid<f64>>],
    marks: &[Vec<FeatureChannel>],
) -> Result<Layer2> {
    let owners = inputs.len();
    let mut live: Vec<Vec<Grid<u8>>> = marks
        .iter()
        .map(|fcs| fcs.iter().map(|fc| fc.cells.clone()).collect())
        .collect();
    let mut layer = Layer2 {
        kernels: Vec::new(),
        channels: vec![Vec::new(); owners],
        marks: vec![Vec::new(); owners],
        skipped: 0,
    };
    let Some((rows, cols)) = live.first().and_then(|fcs| fcs.first()).map(Grid::dims) else {
        return Ok(layer);
    };
    let owner_of = |o: usize| {
        if cfg.use_image_channels {
            Owner::Exemplar(o)
        } else {
            Owner::Merged
        }
    };

    for o in 0..owners {
        for r in 0..rows {
            for c in 0..cols {
                if live[o].iter().all(|fc| fc[(r, c)] == 0) {
                    continue;
                }
                let point = FeaturePoint {
                    row: r,
                    col: c,
                    owner: owner_of(o),
                };
                let patch = extract_multilayer_patch(&inputs[o], r, c)?;
                let Some(mk) = synth_multikernel(&patch, point)? else {
                    for fc in &mut live[o] {
                        fc[(r, c)] = 0;
                    }
                    layer.skipped += 1;
                    continue;
                };
                for fc in &mut live[o] {
                    fc[(r, c)] = 0;
                }
                for (o2, input) in inputs.iter().enumerate() {
                    let ch = convolve_layer2(input, &mk)?;
                    for fc in &mut live[o2] {
                        clear_where_positive(fc, &ch);
                    }
                    layer.marks[o2].push(layer3_marks(cfg, &ch, owner_of(o2))?);
                    layer.channels[o2].push(ch);
                }
                layer.kernels.push(mk);
            }
        }
    }
    Ok(layer)
}

fn wrap(grids: Vec<Vec<Grid<f64>>>, owners: &[Owner], layer: u8) -> Vec<Vec<RealChannel>> {
    grids
        .into_iter()
        .zip(owners)
        .map(|(chs, &owner)| {
            chs.into_iter()
                .enumerate()
                .map(|(kernel_index, cells)| RealChannel {
                    cells,
                    owner,
                    layer,
                    kernel_index,
                })
                .collect()
        })
        .collect()
}

/// Builds both convolutional layers from one exemplar per class.
pub fn build_convnet(exemplars: &ExemplarSet, cfg: &BuildConfig) -> Result<ConvNet> {
    cfg.validate()?;
    let mut warnings = Vec::new();

    let l1 = build_layer1(exemplars, cfg)?;
    for fc in &l1.scans {
        if fc.count() == 0 {
            warnings.push(format!(
                "exemplar {:?} has no boundary features",
                fc.owner
            ));
        }
    }
    if l1.kernels.is_empty() {
        warnings.push("no first-layer kernel could be built".into());
    }

    let inputs: Vec<Vec<Grid<f64>>> = l1
        .channels
        .iter()
        .map(|chs| layer2_inputs(cfg, chs))
        .collect::<Result<_>>()?;
    for (o, fcs) in l1.marks.iter().enumerate() {
        if !fcs.is_empty() && fcs.iter().all(|fc| fc.count() == 0) {
            warnings.push(format!("owner {o} has no second-layer features"));
        }
    }

    let l2 = build_layer2(cfg, &inputs, &l1.marks)?;
    if l2.kernels.is_empty() {
        warnings.push("no second-layer kernel could be built".into());
    }

    let owners: Vec<Owner> = if cfg.use_image_channels {
        (0..exemplars.len()).map(Owner::Exemplar).collect()
    } else {
        vec![Owner::Merged]
    };
    let layer1_pooled = if cfg.use_pooling {
        wrap(inputs, &owners, 1)
    } else {
        Vec::new()
    };

    Ok(ConvNet {
        config: cfg.clone(),
        layer1_kernels: l1.kernels,
        layer2_kernels: l2.kernels,
        layer1_channels: wrap(l1.channels, &owners, 1),
        layer1_pooled,
        layer2_channels: wrap(l2.channels, &owners, 2),
        layer1_features: l1.scans,
        layer2_features: l1.marks,
        layer3_features: l2.marks,
        skipped: [l1.skipped, l2.skipped],
        warnings,
    })
}
