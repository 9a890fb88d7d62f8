//! Training-free construction of a small convolutional network.
//!
//! Kernels, biases and the fully-connected head are computed directly from
//! one exemplar image per class: boundary patches become first-layer
//! kernels, stacks of first-layer responses become second-layer kernels, and
//! a pairwise nearest-neighbour head compares an input's final channels
//! against every exemplar's.

pub mod cli;
pub mod conv_builder;
pub mod error;
pub mod eval;
pub mod export;
pub mod feature_scan;
pub mod format;
pub mod grid;
pub mod metric_head;
pub mod mnist_io;
pub mod network;

pub use conv_builder::{BuildConfig, ConvNet};
pub use error::{Error, FormatError, IdxError, Result};
pub use grid::Grid;
pub use metric_head::{Classification, MetricHead};
pub use mnist_io::{ExemplarSet, RawImage, Selection};
pub use network::AnalyticNetwork;
