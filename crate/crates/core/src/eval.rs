//! Accuracy evaluation and configuration sweeps over a labeled test set.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::conv_builder::BuildConfig;
use crate::error::{Error, Result};
use crate::mnist_io::{binarize, select_exemplars, BinaryImage, RawImage, Selection};
use crate::network::AnalyticNetwork;

/// Default evaluation slice: the first 1000 test images in file order.
pub const DEFAULT_LIMIT: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub index: usize,
    pub label: u8,
    pub class: usize,
    pub scores: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub config: BuildConfig,
    pub seed: Option<u64>,
    pub exemplar_indices: Vec<usize>,
    pub n_test: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    /// `confusion[label][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub build_seconds: f64,
    pub eval_seconds: f64,
    pub kernel_counts: [usize; 2],
    pub channel_counts: [usize; 2],
    /// Exemplars whose dataset position falls inside the evaluated slice.
    pub exemplars_in_slice: usize,
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config            {}", self.config.label());
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed              {seed}");
        }
        let _ = writeln!(s, "exemplars         {:?}", self.exemplar_indices);
        let _ = writeln!(
            s,
            "kernels           {} / {}",
            self.kernel_counts[0], self.kernel_counts[1]
        );
        let _ = writeln!(
            s,
            "channels          {} / {}",
            self.channel_counts[0], self.channel_counts[1]
        );
        let _ = writeln!(s, "build seconds     {:.3}", self.build_seconds);
        let _ = writeln!(s, "eval seconds      {:.3}", self.eval_seconds);
        let _ = writeln!(
            s,
            "recognized        {} / {} ({:.1}%)",
            self.n_correct,
            self.n_test,
            100.0 * self.accuracy
        );
        let _ = writeln!(s, "exemplars in test {}", self.exemplars_in_slice);
        s
    }

    pub fn confusion_csv(&self) -> String {
        let classes = self.confusion.len();
        let mut s = String::from("label");
        for k in 0..classes {
            let _ = write!(s, ",pred_{k}");
        }
        s.push('\n');
        for (label, row) in self.confusion.iter().enumerate() {
            let _ = write!(s, "{label}");
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn scores_csv(&self) -> String {
        let classes = self.confusion.len();
        let mut s = String::from("index,label,predicted");
        for k in 0..classes {
            let _ = write!(s, ",net_{k}");
        }
        s.push('\n');
        for p in &self.predictions {
            let _ = write!(s, "{},{},{}", p.index, p.label, p.class);
            for v in &p.scores {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Classifies the first `limit` labeled images.
pub fn evaluate(net: &AnalyticNetwork, images: &[RawImage], labels: &[u8], limit: usize) -> Result<EvalReport> {
    if images.len() != labels.len() {
        return Err(Error::LabelCount {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let n = limit.min(images.len());
    let started = std::time::Instant::now();
    let predictions: Vec<Prediction> = images[..n]
        .par_iter()
        .zip(&labels[..n])
        .map(|(img, &label)| {
            net.classify(img).map(|c| Prediction {
                index: img.index,
                label,
                class: c.class,
                scores: c.scores,
            })
        })
        .collect::<Result<_>>()?;
    let eval_seconds = started.elapsed().as_secs_f64();

    let classes = net.classes();
    let mut confusion = vec![vec![0usize; classes]; classes];
    for p in &predictions {
        let row = confusion.get_mut(p.label as usize).ok_or_else(|| {
            Error::Config(format!("label {} outside the network's {classes} classes", p.label))
        })?;
        row[p.class] += 1;
    }
    let n_correct = predictions.iter().filter(|p| p.label as usize == p.class).count();
    let first_index = images.first().map(|i| i.index).unwrap_or(0);
    let exemplars_in_slice = net
        .provenance
        .exemplar_indices
        .iter()
        .filter(|&&i| i >= first_index && i < first_index + n)
        .count();

    Ok(EvalReport {
        config: net.config.clone(),
        seed: None,
        exemplar_indices: net.provenance.exemplar_indices.clone(),
        n_test: n,
        n_correct,
        accuracy: if n == 0 { 0.0 } else { n_correct as f64 / n as f64 },
        confusion,
        build_seconds: net.provenance.build_seconds,
        eval_seconds,
        kernel_counts: net.kernel_counts(),
        channel_counts: net.channel_counts(),
        exemplars_in_slice,
        predictions,
    })
}

/// Builds and evaluates one network per `(config, seed)` pair, configs outermost.
///
/// Exemplars are drawn from `pool` (binarized, labeled); evaluation uses the
/// first `limit` entries of `images`.
pub fn sweep(
    configs: &[BuildConfig],
    seeds: &[u64],
    pool: &[BinaryImage],
    images: &[RawImage],
    labels: &[u8],
    limit: usize,
) -> Result<Vec<EvalReport>> {
    let mut reports = Vec::with_capacity(configs.len() * seeds.len());
    for cfg in configs {
        for &seed in seeds {
            let exemplars = select_exemplars(pool, &Selection::Seeded(seed), crate::mnist_io::NUM_CLASSES)?;
            let (net, _) = AnalyticNetwork::build(&exemplars, cfg)?;
            let mut report = evaluate(&net, images, labels, limit)?;
            report.seed = Some(seed);
            reports.push(report);
        }
    }
    Ok(reports)
}

/// Binarized copies of labeled images, for exemplar selection.
pub fn exemplar_pool(images: &[RawImage]) -> Vec<BinaryImage> {
    images.iter().map(binarize).collect()
}

pub fn summary_table(reports: &[EvalReport]) -> String {
    let mut s = String::from("config                              seed   L1   L2   build_s  accuracy\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{:<35} {:>5} {:>4} {:>4} {:>9.3} {:>8.1}%",
            r.config.label(),
            r.seed.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            r.kernel_counts[0],
            r.kernel_counts[1],
            r.build_seconds,
            100.0 * r.accuracy
        );
    }
    s
}
