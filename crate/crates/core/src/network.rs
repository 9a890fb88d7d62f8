//! The deployable network: frozen kernels plus the metric head.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::conv_builder::{build_convnet, final_channels, BuildConfig, ConvKernel, ConvNet, MultiKernel};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::metric_head::{Classification, MetricHead};
use crate::mnist_io::{binarize, ExemplarSet, RawImage, IMAGE_SIDE};

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    /// Dataset positions of the exemplars, in class order.
    pub exemplar_indices: Vec<usize>,
    /// Seconds since the Unix epoch.
    pub built_at: u64,
    pub build_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticNetwork {
    pub config: BuildConfig,
    pub layer1_kernels: Vec<ConvKernel>,
    pub layer2_kernels: Vec<MultiKernel>,
    pub head: MetricHead,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub channels: Vec<Grid<f64>>,
    pub class: usize,
    pub scores: Vec<i32>,
}

/// Counts and settings written next to a saved network.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub format_version: u32,
    pub k_percent: f64,
    pub pooling: bool,
    pub image_channels: bool,
    pub layer1_kernels: usize,
    pub layer2_kernels: usize,
    pub layer1_channels: usize,
    pub layer2_channels: usize,
    pub first_layer_neurons: usize,
    pub second_layer_threshold: i32,
    pub final_channel_shape: [usize; 2],
    pub exemplar_indices: Vec<usize>,
    pub built_at: u64,
    pub build_seconds: f64,
}

impl AnalyticNetwork {
    /// Builds the convolutional layers and the head. The returned [`ConvNet`]
    /// holds the intermediate channels and feature marks.
    pub fn build(exemplars: &ExemplarSet, config: &BuildConfig) -> Result<(AnalyticNetwork, ConvNet)> {
        let started = Instant::now();
        let conv = build_convnet(exemplars, config)?;
        if conv.layer2_kernels.is_empty() {
            return Err(Error::Config(format!(
                "no second-layer kernels for {}; cannot build a head",
                config.label()
            )));
        }
        // Merged builds keep no per-exemplar channels, so the exemplars are
        // re-fed through the frozen kernels.
        let per_exemplar = match conv.exemplar_final_channels() {
            Some(chs) => chs,
            None => exemplars
                .images()
                .iter()
                .map(|img| final_channels(config, &conv.layer1_kernels, &conv.layer2_kernels, img))
                .collect::<Result<_>>()?,
        };
        let head = MetricHead::build(&per_exemplar)?;
        let build_seconds = started.elapsed().as_secs_f64();
        let built_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let net = AnalyticNetwork {
            config: config.clone(),
            layer1_kernels: conv.layer1_kernels.clone(),
            layer2_kernels: conv.layer2_kernels.clone(),
            head,
            provenance: Provenance {
                exemplar_indices: exemplars.source_indices(),
                built_at,
                build_seconds,
            },
        };
        Ok((net, conv))
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    pub fn kernel_counts(&self) -> [usize; 2] {
        [self.layer1_kernels.len(), self.layer2_kernels.len()]
    }

    pub fn channel_counts(&self) -> [usize; 2] {
        let owners = if self.config.use_image_channels {
            self.classes()
        } else {
            1
        };
        [
            self.layer1_kernels.len() * owners,
            self.layer2_kernels.len() * owners,
        ]
    }

    /// Binarizes the image and returns its final channels, class and scores.
    pub fn forward(&self, img: &RawImage) -> Result<Forward> {
        if img.pixels.dims() != (IMAGE_SIDE, IMAGE_SIDE) {
            return Err(Error::Dimension {
                expected: (IMAGE_SIDE, IMAGE_SIDE),
                found: img.pixels.dims(),
            });
        }
        let bin = binarize(img);
        let channels = final_channels(&self.config, &self.layer1_kernels, &self.layer2_kernels, &bin)?;
        let Classification { class, scores } = self.head.classify(&channels)?;
        Ok(Forward {
            channels,
            class,
            scores,
        })
    }

    pub fn classify(&self, img: &RawImage) -> Result<Classification> {
        self.forward(img).map(|f| Classification {
            class: f.class,
            scores: f.scores,
        })
    }

    pub fn manifest(&self) -> Manifest {
        let [c1, c2] = self.channel_counts();
        let (_, (rows, cols)) = self.head.first.input_shape();
        Manifest {
            format_version: crate::format::VERSION,
            k_percent: self.config.k_percent,
            pooling: self.config.use_pooling,
            image_channels: self.config.use_image_channels,
            layer1_kernels: self.layer1_kernels.len(),
            layer2_kernels: self.layer2_kernels.len(),
            layer1_channels: c1,
            layer2_channels: c2,
            first_layer_neurons: self.head.first.neuron_count(),
            second_layer_threshold: self.head.second.threshold,
            final_channel_shape: [rows, cols],
            exemplar_indices: self.provenance.exemplar_indices.clone(),
            built_at: self.provenance.built_at,
            build_seconds: self.provenance.build_seconds,
        }
    }
}
