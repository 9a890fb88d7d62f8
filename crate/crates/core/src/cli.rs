//! Command-line front end: build, classify, evaluate, sweep and dump.
//!
//! Exit codes: 0 on success, 1 on runtime failures, 2 on usage errors
//! (bad flags, missing input files, invalid settings). Inputs are checked
//! before any file is read.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::conv_builder::{build_convnet, BuildConfig, ConvNet};
use crate::eval::{self, EvalReport, DEFAULT_LIMIT};
use crate::export;
use crate::feature_scan::{FeatureChannel, Owner};
use crate::format;
use crate::grid::Grid;
use crate::mnist_io::{self, select_exemplars, RawImage, Selection, NUM_CLASSES};
use crate::network::AnalyticNetwork;

/// Environment variable naming the directory that holds the default
/// MNIST files.
pub const DATA_DIR_ENV: &str = "ACNN_DATA_DIR";
pub const DEFAULT_IMAGES: &str = "t10k-images-idx3-ubyte.gz";
pub const DEFAULT_LABELS: &str = "t10k-labels-idx1-ubyte.gz";

#[derive(Debug, Parser)]
#[command(name = "acnn", version, about = "Build and run convolutional networks computed from one exemplar per class")]
struct Cli {
    /// Worker threads for evaluation (defaults to all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a network from exemplars and save it.
    Build(BuildArgs),
    /// Classify images with a saved network.
    Classify(ClassifyArgs),
    /// Measure accuracy of a saved or freshly built network.
    Eval(EvalArgs),
    /// Build and evaluate several configurations over several seeds.
    Sweep(SweepArgs),
    /// Write kernels, channels, feature marks, thresholds or scores.
    Dump(DumpArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// IDX image file, optionally gzipped [default: $ACNN_DATA_DIR/t10k-images-idx3-ubyte.gz]
    #[arg(long, value_name = "PATH")]
    images: Option<PathBuf>,
    /// IDX label file, optionally gzipped [default: $ACNN_DATA_DIR/t10k-labels-idx1-ubyte.gz]
    #[arg(long, value_name = "PATH")]
    labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Per-exemplar channels, 2×2 pooling, K = 40.
    Pooled,
    /// Per-exemplar channels, no pooling, K = 40.
    Unpooled,
    /// Max-merged channels, no pooling, K = 30.
    Merged,
}

impl Preset {
    fn config(self) -> BuildConfig {
        match self {
            Preset::Pooled => BuildConfig::pooled_image_channels(),
            Preset::Unpooled => BuildConfig::unpooled_image_channels(),
            Preset::Merged => BuildConfig::unpooled_merged(),
        }
    }
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Starting configuration; the flags below override parts of it.
    #[arg(long, value_enum, default_value_t = Preset::Pooled)]
    preset: Preset,
    /// First-layer bias as a percentage of a kernel's own response, in (0, 100].
    #[arg(long = "K", visible_alias = "k", value_name = "PERCENT")]
    k: Option<f64>,
    #[arg(long, overrides_with = "no_pooling")]
    pooling: bool,
    #[arg(long, overrides_with = "pooling")]
    no_pooling: bool,
    /// Keep separate channels for every exemplar.
    #[arg(long, overrides_with = "merged")]
    image_channels: bool,
    /// Fold all exemplars into one max-merged channel set.
    #[arg(long, overrides_with = "image_channels")]
    merged: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> BuildConfig {
        let mut cfg = self.preset.config();
        if let Some(k) = self.k {
            cfg.k_percent = k;
        }
        if self.pooling {
            cfg.use_pooling = true;
        }
        if self.no_pooling {
            cfg.use_pooling = false;
        }
        if self.image_channels {
            cfg.use_image_channels = true;
        }
        if self.merged {
            cfg.use_image_channels = false;
        }
        cfg
    }
}

#[derive(Debug, Args)]
struct SelectArgs {
    /// Dataset positions of the exemplars, one per class, comma separated.
    #[arg(long, value_delimiter = ',', value_name = "I,J,...", conflicts_with = "seed")]
    exemplar_indices: Vec<usize>,
    /// Seed for a random per-class exemplar draw [default: 1]
    #[arg(long)]
    seed: Option<u64>,
}

impl SelectArgs {
    fn selection(&self) -> Selection {
        if self.exemplar_indices.is_empty() {
            Selection::Seeded(self.seed.unwrap_or(1))
        } else {
            Selection::Indices(self.exemplar_indices.clone())
        }
    }
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    select: SelectArgs,
    /// Network file to write; a JSON manifest is written to `<out>.json`.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long, value_name = "PATH")]
    net: PathBuf,
    /// IDX image file [default: $ACNN_DATA_DIR/t10k-images-idx3-ubyte.gz]
    #[arg(long, value_name = "PATH")]
    images: Option<PathBuf>,
    /// Optional labels, echoed next to each prediction.
    #[arg(long, value_name = "PATH")]
    labels: Option<PathBuf>,
    /// Specific image positions; overrides --start/--limit.
    #[arg(long = "index", value_delimiter = ',', value_name = "I,J,...")]
    indices: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long, default_value_t = 10)]
    limit: usize,
    /// CSV file for the scores (stdout when absent).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Saved network; when absent one is built from the flags below.
    #[arg(long, value_name = "PATH")]
    net: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    select: SelectArgs,
    /// Number of leading test images to classify.
    #[arg(long, default_value_t = DEFAULT_LIMIT)]
    limit: usize,
    /// Directory for summary.txt, confusion.csv and scores.csv.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Preset::Pooled, Preset::Unpooled, Preset::Merged])]
    presets: Vec<Preset>,
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3, 4, 5])]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = DEFAULT_LIMIT)]
    limit: usize,
    /// CSV file with one line per run.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum What {
    Kernels,
    RealChannels,
    FeatureChannels,
    Thresholds,
    Scores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DumpFormat {
    Csv,
    Pgm,
}

#[derive(Debug, Args)]
struct DumpArgs {
    #[arg(long, value_name = "PATH")]
    net: PathBuf,
    /// Dataset the network's exemplars came from.
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    what: What,
    #[arg(long, value_enum, default_value_t = DumpFormat::Csv)]
    format: DumpFormat,
    /// Restrict per-exemplar output to this class.
    #[arg(long, value_name = "CLASS")]
    exemplar: Option<usize>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<crate::error::Error> for Failure {
    fn from(e: crate::error::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn execute(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return usage("--threads must be at least 1");
        }
        // A global pool can only be installed once per process; later calls
        // keep the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Dump(a) => cmd_dump(a),
    }
}

fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn existing(path: Option<&PathBuf>, default_name: &str, what: &str) -> CliResult<PathBuf> {
    let path = path.cloned().unwrap_or_else(|| data_dir().join(default_name));
    if !path.is_file() {
        return usage(format!("{what} file not found: {}", path.display()));
    }
    Ok(path)
}

impl DataArgs {
    fn paths(&self) -> CliResult<(PathBuf, PathBuf)> {
        Ok((
            existing(self.images.as_ref(), DEFAULT_IMAGES, "image")?,
            existing(self.labels.as_ref(), DEFAULT_LABELS, "label")?,
        ))
    }
}

fn validated(cfg: BuildConfig) -> CliResult<BuildConfig> {
    match cfg.validate() {
        Ok(()) => Ok(cfg),
        Err(e) => usage(e.to_string()),
    }
}

fn load_labeled(images: &Path, labels: &Path) -> CliResult<Vec<RawImage>> {
    mnist_io::load_labeled(images, labels)
        .with_context(|| format!("reading {} / {}", images.display(), labels.display()))
        .map_err(Failure::from)
}

fn build_network(
    images: &[RawImage],
    cfg: &BuildConfig,
    selection: &Selection,
) -> CliResult<(AnalyticNetwork, ConvNet)> {
    let pool = eval::exemplar_pool(images);
    let exemplars = select_exemplars(&pool, selection, NUM_CLASSES)?;
    Ok(AnalyticNetwork::build(&exemplars, cfg)?)
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn cmd_build(a: BuildArgs) -> CliResult {
    let cfg = validated(a.config.resolve())?;
    let (images, labels) = a.data.paths()?;
    let data = load_labeled(&images, &labels)?;
    let (net, conv) = build_network(&data, &cfg, &a.select.selection())?;
    for w in &conv.warnings {
        eprintln!("warning: {w}");
    }
    format::save(&net, &a.out)?;
    let manifest = manifest_path(&a.out);
    format::save_manifest(&net, &manifest)?;
    let [k1, k2] = net.kernel_counts();
    let [c1, c2] = net.channel_counts();
    println!("config        {}", cfg.label());
    println!("exemplars     {:?}", net.provenance.exemplar_indices);
    println!("kernels       {k1} / {k2}");
    println!("channels      {c1} / {c2}");
    println!("skipped       {} / {}", conv.skipped[0], conv.skipped[1]);
    println!("build seconds {:.3}", net.provenance.build_seconds);
    println!("wrote         {} and {}", a.out.display(), manifest.display());
    Ok(())
}

fn load_net(path: &Path) -> CliResult<AnalyticNetwork> {
    if !path.is_file() {
        return usage(format!("network file not found: {}", path.display()));
    }
    format::load(path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(Failure::from)
}

fn write_or_print(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(p) => fs::write(p, text)
            .with_context(|| format!("writing {}", p.display()))
            .map_err(Failure::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_classify(a: ClassifyArgs) -> CliResult {
    let net_path = a.net.clone();
    if !net_path.is_file() {
        return usage(format!("network file not found: {}", net_path.display()));
    }
    let images_path = existing(a.images.as_ref(), DEFAULT_IMAGES, "image")?;
    let labels_path = match &a.labels {
        Some(p) => Some(existing(Some(p), DEFAULT_LABELS, "label")?),
        None => None,
    };
    let net = load_net(&net_path)?;
    let mut images = mnist_io::load_idx_images(&images_path)
        .with_context(|| format!("reading {}", images_path.display()))?;
    if let Some(p) = &labels_path {
        let labels = mnist_io::load_idx_labels(p).with_context(|| format!("reading {}", p.display()))?;
        mnist_io::attach_labels(&mut images, &labels)?;
    }
    let positions: Vec<usize> = if a.indices.is_empty() {
        (a.start..a.start.saturating_add(a.limit).min(images.len())).collect()
    } else {
        a.indices.clone()
    };
    if let Some(&bad) = positions.iter().find(|&&i| i >= images.len()) {
        return usage(format!("image index {bad} out of range for {} images", images.len()));
    }
    let mut rows = Vec::with_capacity(positions.len());
    for &i in &positions {
        let c = net.classify(&images[i])?;
        rows.push((i, images[i].label, c.class, c.scores));
    }
    let csv = export::scores_csv(rows.iter().map(|(i, l, c, s)| (*i, *l, *c, s.as_slice())));
    write_or_print(a.out.as_deref(), &csv)
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let cfg = validated(a.config.resolve())?;
    if let Some(p) = &a.net {
        if !p.is_file() {
            return usage(format!("network file not found: {}", p.display()));
        }
    }
    let (images, labels) = a.data.paths()?;
    let data = load_labeled(&images, &labels)?;
    let (net, seed) = match &a.net {
        Some(p) => (load_net(p)?, None),
        None => {
            let selection = a.select.selection();
            let seed = match selection {
                Selection::Seeded(s) => Some(s),
                Selection::Indices(_) => None,
            };
            (build_network(&data, &cfg, &selection)?.0, seed)
        }
    };
    let truth: Vec<u8> = data.iter().map(|i| i.label.unwrap_or(u8::MAX)).collect();
    let mut report = eval::evaluate(&net, &data, &truth, a.limit)?;
    report.seed = seed;
    print!("{}", report.summary());
    if let Some(dir) = &a.out {
        write_report(dir, &report)?;
    }
    Ok(())
}

fn write_report(dir: &Path, report: &EvalReport) -> CliResult {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, text) in [
        ("summary.txt", report.summary()),
        ("confusion.csv", report.confusion_csv()),
        ("scores.csv", report.scores_csv()),
    ] {
        write_or_print(Some(&dir.join(name)), &text)?;
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult {
    if a.presets.is_empty() || a.seeds.is_empty() {
        return usage("at least one preset and one seed are required");
    }
    let (images, labels) = a.data.paths()?;
    let data = load_labeled(&images, &labels)?;
    let truth: Vec<u8> = data.iter().map(|i| i.label.unwrap_or(u8::MAX)).collect();
    let pool = eval::exemplar_pool(&data);
    let mut csv = String::from("config,seed,layer1_kernels,layer2_kernels,build_seconds,n_test,n_correct,accuracy\n");
    let mut all = Vec::new();
    for preset in &a.presets {
        let cfg = preset.config();
        let reports = eval::sweep(std::slice::from_ref(&cfg), &a.seeds, &pool, &data, &truth, a.limit)?;
        let mean = reports.iter().map(|r| r.accuracy).sum::<f64>() / reports.len() as f64;
        for r in &reports {
            let _ = writeln!(
                csv,
                "{},{},{},{},{:.6},{},{},{:.6}",
                cfg.label(),
                r.seed.unwrap_or_default(),
                r.kernel_counts[0],
                r.kernel_counts[1],
                r.build_seconds,
                r.n_test,
                r.n_correct,
                r.accuracy
            );
        }
        all.push((cfg.label(), mean));
        print!("{}", eval::summary_table(&reports));
    }
    for (label, mean) in &all {
        println!("mean {label:<35} {:.1}%", 100.0 * mean);
    }
    if let Some(p) = &a.out {
        write_or_print(Some(p), &csv)?;
    }
    Ok(())
}

fn owner_name(owner: Owner) -> String {
    match owner {
        Owner::Exemplar(e) => format!("e{e}"),
        Owner::Merged => "merged".into(),
    }
}

fn keep_owner(filter: Option<usize>, owner: Owner) -> bool {
    match (filter, owner) {
        (None, _) | (_, Owner::Merged) => true,
        (Some(want), Owner::Exemplar(e)) => want == e,
    }
}

struct Sink<'a> {
    dir: &'a Path,
    format: DumpFormat,
    written: usize,
}

impl Sink<'_> {
    fn file(&mut self, stem: &str, csv: String, gray: Grid<u8>) -> CliResult {
        let (name, bytes) = match self.format {
            DumpFormat::Csv => (format!("{stem}.csv"), csv.into_bytes()),
            DumpFormat::Pgm => (format!("{stem}.pgm"), export::pgm(&gray)),
        };
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.written += 1;
        Ok(())
    }

    fn real(&mut self, stem: &str, g: &Grid<f64>) -> CliResult {
        self.file(stem, export::grid_csv(g), export::to_gray(g))
    }

    fn weights(&mut self, stem: &str, g: &Grid<f64>) -> CliResult {
        self.file(stem, export::grid_csv(g), export::weights_to_gray(g))
    }

    fn marks(&mut self, stem: &str, fc: &FeatureChannel) -> CliResult {
        self.file(
            stem,
            export::grid_csv(&fc.cells),
            fc.cells.map(|&v| if v > 0 { 255 } else { 0 }),
        )
    }
}

fn cmd_dump(a: DumpArgs) -> CliResult {
    if !a.net.is_file() {
        return usage(format!("network file not found: {}", a.net.display()));
    }
    if let Some(e) = a.exemplar {
        if e >= NUM_CLASSES {
            return usage(format!("--exemplar must be below {NUM_CLASSES}, got {e}"));
        }
    }
    if a.format == DumpFormat::Pgm && matches!(a.what, What::Thresholds | What::Scores) {
        return usage("thresholds and scores are tables; use --format csv");
    }
    let data_paths = match a.what {
        What::Kernels | What::Thresholds => None,
        _ => Some(a.data.paths()?),
    };
    let net = load_net(&a.net)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    if a.what == What::Thresholds {
        let path = a.out.join("thresholds.csv");
        return write_or_print(Some(&path), &export::thresholds_csv(&net.head.first));
    }
    if a.what == What::Kernels {
        let mut sink = Sink {
            dir: &a.out,
            format: a.format,
            written: 0,
        };
        dump_kernels(&mut sink, &net)?;
        println!("wrote {} files to {}", sink.written, a.out.display());
        return Ok(());
    }

    let Some((images, labels)) = data_paths else {
        unreachable!("only kernels and thresholds skip the dataset")
    };
    let data = load_labeled(&images, &labels)?;
    let pool = eval::exemplar_pool(&data);
    let exemplars = select_exemplars(&pool, &Selection::Indices(net.provenance.exemplar_indices.clone()), NUM_CLASSES)?;
    if a.what == What::Scores {
        let mut rows = Vec::new();
        for img in exemplars.images() {
            if !keep_owner(a.exemplar, Owner::Exemplar(img.label.unwrap_or_default() as usize)) {
                continue;
            }
            let c = net.classify(&data[img.source_index])?;
            rows.push((img.source_index, img.label, c.class, c.scores));
        }
        let csv = export::scores_csv(rows.iter().map(|(i, l, c, s)| (*i, *l, *c, s.as_slice())));
        return write_or_print(Some(&a.out.join("scores.csv")), &csv);
    }

    let conv = build_convnet(&exemplars, &net.config)?;
    if conv.layer1_kernels != net.layer1_kernels || conv.layer2_kernels != net.layer2_kernels {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "rebuilding from exemplars {:?} does not reproduce the saved kernels; was the network built from a different dataset?",
            net.provenance.exemplar_indices
        )));
    }
    let mut sink = Sink {
        dir: &a.out,
        format: a.format,
        written: 0,
    };
    match a.what {
        What::RealChannels => {
            for (layer, sets) in [(1, &conv.layer1_channels), (2, &conv.layer2_channels)] {
                for chs in sets {
                    for ch in chs.iter().filter(|c| keep_owner(a.exemplar, c.owner)) {
                        let stem = format!("layer{layer}_{}_k{:03}", owner_name(ch.owner), ch.kernel_index);
                        sink.real(&stem, &ch.cells)?;
                    }
                }
            }
            for chs in &conv.layer1_pooled {
                for ch in chs.iter().filter(|c| keep_owner(a.exemplar, c.owner)) {
                    let stem = format!("layer1_pooled_{}_k{:03}", owner_name(ch.owner), ch.kernel_index);
                    sink.real(&stem, &ch.cells)?;
                }
            }
        }
        What::FeatureChannels => {
            for fc in conv.layer1_features.iter().filter(|f| keep_owner(a.exemplar, f.owner)) {
                sink.marks(&format!("marks1_{}", owner_name(fc.owner)), fc)?;
            }
            for (stage, sets) in [(2, &conv.layer2_features), (3, &conv.layer3_features)] {
                for fcs in sets {
                    for (k, fc) in fcs.iter().enumerate().filter(|(_, f)| keep_owner(a.exemplar, f.owner)) {
                        sink.marks(&format!("marks{stage}_{}_k{k:03}", owner_name(fc.owner)), fc)?;
                    }
                }
            }
        }
        What::Kernels | What::Thresholds | What::Scores => unreachable!("handled above"),
    }
    println!("wrote {} files to {}", sink.written, a.out.display());
    Ok(())
}

/// First-layer kernels one file each; second-layer kernels as their slices
/// stacked vertically (CSV: blank line between slices; PGM: one-pixel gap).
fn dump_kernels(sink: &mut Sink<'_>, net: &AnalyticNetwork) -> CliResult {
    for (i, k) in net.layer1_kernels.iter().enumerate() {
        sink.weights(&format!("kernel1_{i:03}"), &k.weights)?;
    }
    for (i, mk) in net.layer2_kernels.iter().enumerate() {
        let side = crate::feature_scan::KERNEL_SIZE;
        let slices: Vec<Grid<f64>> = (0..mk.channels)
            .map(|m| Grid::from_vec(side, side, mk.slice(m).to_vec()).expect("slice is 5×5"))
            .collect();
        let csv = slices
            .iter()
            .map(export::grid_csv)
            .collect::<Vec<_>>()
            .join("\n");
        let all = Grid::from_vec(mk.channels * side, side, mk.weights.clone()).expect("weights are C×5×5");
        let scaled = export::weights_to_gray(&all);
        let rows = mk.channels * (side + 1) - 1;
        let gray = Grid::from_fn(rows, side, |r, c| {
            if r % (side + 1) == side {
                0
            } else {
                scaled[(r / (side + 1) * side + r % (side + 1), c)]
            }
        });
        sink.file(&format!("kernel2_{i:03}"), csv, gray)?;
    }
    Ok(())
}
