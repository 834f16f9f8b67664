//! `topoloss` command-line tool.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for data errors.
//! Data errors print a single `error:` line on stderr.

use std::collections::BTreeMap;
use std::ffi::OsStr;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use topoloss::io::{
    encode_cloud_csv, encode_diagram_csv, parse_cloud_csv, parse_pgm, read_diagram_csv, read_pgm,
};
use topoloss::metrics::{
    pixel_metrics, weighted_hausdorff, HausdorffSummary, PixelMetrics, PixelSummary,
    VesselMatchReport, VesselSummary,
};
use topoloss::synth::{
    history_csv, synthetic_dataset, toy_train, LossMode, Scenario, Splits, ToyTrainConfig,
    WeightRefresh,
};
use topoloss::{
    bottleneck, extract_contour, rips_diagram, rips_diagrams, topo_weight, vessel_metrics,
    wasserstein, BinaryMask, ConventionScale, EdgeCap, Error, GroundMetric, LossConfig, PointCloud,
    RipsConfig, TopoWeight,
};

#[derive(Parser, Debug)]
#[command(
    name = "topoloss",
    version,
    about = "Topology-aware segmentation loss toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract the contour of a mask PGM as a point-cloud CSV (`x,y`).
    Contours {
        /// Mask PGM (P2 or P5); grey levels >= 128 are foreground.
        mask: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Rips persistence diagram of a point-cloud CSV or of a mask's contour.
    Persistence {
        /// Point-cloud CSV (`x,y`) or mask PGM.
        input: PathBuf,
        /// Homology degree to report; both degrees when omitted.
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
        degree: Option<u8>,
        #[command(flatten)]
        rips: RipsArgs,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Distance between two diagram CSVs, printed as JSON.
    Distance {
        /// First diagram CSV (`degree,birth,death`).
        a: PathBuf,
        /// Second diagram CSV.
        b: PathBuf,
        /// Degree to compare; required when a file holds both degrees.
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
        degree: Option<u8>,
        /// Wasserstein power q: the value is the sum of q-th powers of
        /// matched distances.
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        /// Ground metric between diagram points.
        #[arg(long, value_enum, default_value_t = MetricArg::Linf)]
        metric: MetricArg,
        /// Report the bottleneck distance (L-infinity) instead.
        #[arg(long, conflicts_with_all = ["q", "metric"])]
        bottleneck: bool,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Topological weight of a prediction against its ground truth, as JSON.
    ///
    /// Given two directories, every file stem present in both is processed
    /// and the output is a JSON array sorted by stem.
    Weight {
        /// Ground-truth mask PGM, or a directory of them.
        gt: PathBuf,
        /// Prediction PGM (grey level / maxval is the posterior), or a directory.
        pred: PathBuf,
        #[command(flatten)]
        loss: LossArgs,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Evaluate predictions against ground truth; JSON with per-image and
    /// aggregate blocks. Files are paired by stem.
    Evaluate {
        /// Directory of ground-truth mask PGMs.
        gt_dir: PathBuf,
        /// Directory of prediction PGMs.
        pred_dir: PathBuf,
        /// Posterior threshold; a pixel is foreground when p >= threshold.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train the toy logistic segmenter on synthetic scenes.
    Toytrain(ToyTrainArgs),
}

#[derive(Args, Debug)]
struct RipsArgs {
    /// Farthest-point subsample clouds larger than this.
    #[arg(long, default_value_t = 128)]
    max_points: usize,
    /// Filtration value of an edge: its length, or half of it.
    #[arg(long, value_enum, default_value_t = ScaleArg::Distance)]
    scale: ScaleArg,
    /// Drop edges longer than this (after scaling); classes alive at the cap
    /// are reported with death `inf`.
    #[arg(long)]
    edge_cap: Option<f64>,
}

impl RipsArgs {
    fn config(&self) -> RipsConfig {
        RipsConfig {
            max_points: self.max_points,
            edge_cap: self.edge_cap.map_or(EdgeCap::Diameter, EdgeCap::Finite),
            convention_scale: match self.scale {
                ScaleArg::Distance => ConventionScale::Distance,
                ScaleArg::HalfDistance => ConventionScale::HalfDistance,
            },
        }
    }
}

#[derive(Args, Debug)]
struct LossArgs {
    /// Posterior threshold for binarising the prediction.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Ground truths with a component smaller than this many pixels use the
    /// great-vessel constants.
    #[arg(long, default_value_t = 1500)]
    gv_area_threshold: usize,
    /// Wasserstein power q.
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    /// Ground metric between diagram points.
    #[arg(long, value_enum, default_value_t = MetricArg::Linf)]
    metric: MetricArg,
    /// Farthest-point subsample contours larger than this.
    #[arg(long, default_value_t = 128)]
    max_points: usize,
}

impl LossArgs {
    fn config(&self) -> LossConfig {
        let mut config = LossConfig {
            prob_threshold: self.threshold,
            gv_area_threshold: self.gv_area_threshold,
            wasserstein_q: self.q,
            ground_metric: self.metric.into(),
            ..LossConfig::default()
        };
        config.rips.max_points = self.max_points;
        config
    }
}

#[derive(Args, Debug)]
struct ToyTrainArgs {
    /// Scenario of the generated scenes; repeat to cycle through several.
    #[arg(long, value_enum, default_values_t = [ScenarioArg::Mixed])]
    scenario: Vec<ScenarioArg>,
    /// Number of scenes; two thirds train, one sixth validation, one sixth test.
    #[arg(long, default_value_t = 60)]
    scenes: usize,
    /// Seed of the first scene; later scenes use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// Training loss.
    #[arg(long, value_enum, default_value_t = LossModeArg::Topo)]
    loss_mode: LossModeArg,
    /// Maximum number of epochs.
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    /// Epochs trained with unit weights before the topological term starts.
    #[arg(long, default_value_t = 25)]
    warmup: usize,
    /// Stop after this many epochs without a lower validation loss.
    #[arg(long, default_value_t = 40)]
    patience: usize,
    /// Gradient-descent step size (per-pixel mean gradient).
    #[arg(long, default_value_t = 128.0)]
    lr: f64,
    /// Scenes per update.
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    /// When weights are recomputed.
    #[arg(long, value_enum, default_value_t = RefreshArg::PerEpoch)]
    refresh: RefreshArg,
    /// JSON report path; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-epoch CSV path.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MetricArg {
    Linf,
    L2,
}

impl From<MetricArg> for GroundMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Linf => GroundMetric::LInf,
            MetricArg::L2 => GroundMetric::L2,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScaleArg {
    Distance,
    HalfDistance,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScenarioArg {
    AortaOnly,
    GreatVessels,
    Mixed,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossModeArg {
    CeOnly,
    Topo,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RefreshArg {
    PerEpoch,
    PerForward,
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) => Failure::usage(e.to_string()),
            _ => Failure::data(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let pool = thread_pool()?;
    pool.install(|| match cli.command {
        Command::Contours { mask, output } => {
            let cloud = extract_contour(&read_mask(&mask)?);
            emit(output.as_deref(), &encode_cloud_csv(&cloud))
        }
        Command::Persistence {
            input,
            degree,
            rips,
            output,
        } => {
            let cloud = read_cloud_or_mask(&input)?;
            let config = rips.config();
            let csv = match degree {
                Some(d) => encode_diagram_csv(&[&rips_diagram(&cloud, d, &config)?]),
                None => {
                    let [h0, h1] = rips_diagrams(&cloud, &config)?;
                    encode_diagram_csv(&[&h0, &h1])
                }
            };
            emit(output.as_deref(), &csv)
        }
        Command::Distance {
            a,
            b,
            degree,
            q,
            metric,
            bottleneck: use_bottleneck,
            output,
        } => {
            let da = read_diagram_csv(&a, degree)?;
            let db = read_diagram_csv(&b, degree)?;
            let report = if use_bottleneck {
                bottleneck(&da, &db)?
            } else {
                wasserstein(&da, &db, q, metric.into())?
            };
            emit_json(output.as_deref(), &report)
        }
        Command::Weight {
            gt,
            pred,
            loss,
            output,
        } => {
            let config = loss.config();
            config.validate()?;
            if gt.is_dir() && pred.is_dir() {
                let pairs = paired_files(&gt, &pred)?;
                let weights = pairs
                    .par_iter()
                    .map(|(stem, g, p)| {
                        Ok(StemWeight {
                            stem: stem.clone(),
                            weight: weight_of(g, p, &config)?,
                        })
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                emit_json(output.as_deref(), &weights)
            } else if gt.is_dir() || pred.is_dir() {
                Err(Failure::usage("weight takes two files or two directories"))
            } else {
                emit_json(output.as_deref(), &weight_of(&gt, &pred, &config)?)
            }
        }
        Command::Evaluate {
            gt_dir,
            pred_dir,
            threshold,
            output,
        } => {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Failure::usage(format!(
                    "threshold must lie in [0, 1], got {threshold}"
                )));
            }
            let report = evaluate(&gt_dir, &pred_dir, threshold)?;
            emit_json(output.as_deref(), &report)
        }
        Command::Toytrain(args) => toytrain(args),
    })
}

fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var("TOPOLOSS_THREADS") {
        match value.trim().parse::<usize>() {
            Ok(n) if n > 0 => builder = builder.num_threads(n),
            _ => {
                return Err(Failure::usage(format!(
                    "TOPOLOSS_THREADS must be a positive integer, got {value:?}"
                )))
            }
        }
    }
    builder
        .build()
        .map_err(|e| Failure::data(format!("cannot start worker pool: {e}")))
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn read_mask(path: &Path) -> CliResult<BinaryMask> {
    Ok(read_pgm(path)?.to_mask()?)
}

fn is_pgm(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == b'P' && matches!(bytes[1], b'2' | b'5')
}

fn read_cloud_or_mask(path: &Path) -> CliResult<PointCloud> {
    let bytes = read_bytes(path)?;
    if is_pgm(&bytes) {
        let mask = parse_pgm(&bytes, path)?.to_mask()?;
        Ok(extract_contour(&mask))
    } else {
        Ok(parse_cloud_csv(&bytes, path)?)
    }
}

fn with_paths(e: Error, a: &Path, b: &Path) -> Failure {
    match e {
        Error::DimensionMismatch { .. } => {
            Failure::data(format!("{} vs {}: {e}", a.display(), b.display()))
        }
        other => other.into(),
    }
}

fn weight_of(gt: &Path, pred: &Path, config: &LossConfig) -> CliResult<TopoWeight> {
    let gt_mask = read_mask(gt)?;
    let probs = read_pgm(pred)?.to_probability_map()?;
    topo_weight(&gt_mask, &probs, config).map_err(|e| with_paths(e, gt, pred))
}

#[derive(Serialize)]
struct StemWeight {
    stem: String,
    #[serde(flatten)]
    weight: TopoWeight,
}

fn pgm_stems(dir: &Path) -> CliResult<BTreeMap<String, PathBuf>> {
    let entries =
        fs::read_dir(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    let mut stems = BTreeMap::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?
            .path();
        if path.is_file() && path.extension() == Some(OsStr::new("pgm")) {
            if let Some(stem) = path.file_stem().and_then(OsStr::to_str) {
                stems.insert(stem.to_string(), path);
            }
        }
    }
    Ok(stems)
}

/// Files present in both directories, sorted by stem. A stem missing from
/// either side is a data error.
fn paired_files(a: &Path, b: &Path) -> CliResult<Vec<(String, PathBuf, PathBuf)>> {
    let left = pgm_stems(a)?;
    let mut right = pgm_stems(b)?;
    let mut pairs = Vec::with_capacity(left.len());
    for (stem, path) in left {
        match right.remove(&stem) {
            Some(other) => pairs.push((stem, path, other)),
            None => {
                return Err(Failure::data(format!(
                    "{}: no matching {stem}.pgm in {}",
                    path.display(),
                    b.display()
                )))
            }
        }
    }
    if let Some((stem, path)) = right.into_iter().next() {
        return Err(Failure::data(format!(
            "{}: no matching {stem}.pgm in {}",
            path.display(),
            a.display()
        )));
    }
    Ok(pairs)
}

#[derive(Serialize)]
struct ImageReport {
    stem: String,
    /// `None` when the ground truth is empty.
    pixel: Option<PixelMetrics>,
    vessel: VesselMatchReport,
    /// `None` when either mask is empty.
    hausdorff: Option<f64>,
}

#[derive(Serialize)]
struct Aggregate {
    pixel: PixelSummary,
    vessel: VesselSummary,
    hausdorff: HausdorffSummary,
}

#[derive(Serialize)]
struct EvaluationReport {
    images: Vec<ImageReport>,
    aggregate: Aggregate,
}

fn evaluate(gt_dir: &Path, pred_dir: &Path, threshold: f64) -> CliResult<EvaluationReport> {
    let pairs = paired_files(gt_dir, pred_dir)?;
    let loaded = pairs
        .par_iter()
        .map(|(stem, g, p)| {
            let gt = read_mask(g)?;
            let pred = read_pgm(p)?.to_probability_map()?.threshold(threshold);
            let pixel = match pixel_metrics(&gt, &pred) {
                Ok(m) => Some(m),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(with_paths(e, g, p)),
            };
            let vessel = vessel_metrics(&gt, &pred).map_err(|e| with_paths(e, g, p))?;
            let hausdorff = weighted_hausdorff(&gt, &pred).map_err(|e| with_paths(e, g, p))?;
            Ok((
                ImageReport {
                    stem: stem.clone(),
                    pixel,
                    vessel,
                    hausdorff,
                },
                gt,
                pred,
            ))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let aggregate = Aggregate {
        pixel: PixelSummary::from_images(loaded.iter().map(|(_, g, p)| (g, p)))?,
        vessel: VesselSummary::from_reports(loaded.iter().map(|(r, _, _)| &r.vessel)),
        hausdorff: HausdorffSummary::from_values(loaded.iter().map(|(r, _, _)| r.hausdorff)),
    };
    Ok(EvaluationReport {
        images: loaded.into_iter().map(|(r, _, _)| r).collect(),
        aggregate,
    })
}

fn toytrain(args: ToyTrainArgs) -> CliResult<()> {
    let scenarios: Vec<Scenario> = args
        .scenario
        .iter()
        .map(|s| match s {
            ScenarioArg::AortaOnly => Scenario::AortaOnly,
            ScenarioArg::GreatVessels => Scenario::GreatVessels,
            ScenarioArg::Mixed => Scenario::Mixed,
        })
        .collect();
    if args.scenes < 6 {
        return Err(Failure::usage(format!(
            "need at least 6 scenes, got {}",
            args.scenes
        )));
    }
    if !(0.0..=1.0).contains(&args.noise) {
        return Err(Failure::usage(format!(
            "noise must lie in [0, 1], got {}",
            args.noise
        )));
    }
    let config = ToyTrainConfig {
        epochs: args.epochs,
        warmup_epochs: args.warmup,
        patience: args.patience,
        learning_rate: args.lr,
        batch_size: args.batch_size,
        weight_refresh: match args.refresh {
            RefreshArg::PerEpoch => WeightRefresh::PerEpoch,
            RefreshArg::PerForward => WeightRefresh::PerForward,
        },
    };
    config.validate()?;
    let mode = match args.loss_mode {
        LossModeArg::CeOnly => LossMode::CeOnly,
        LossModeArg::Topo => LossMode::Topo,
    };
    let scenes = synthetic_dataset(args.scenes, &scenarios, args.seed, args.noise)?;
    let held_out = args.scenes / 6;
    let train_end = args.scenes - 2 * held_out;
    let splits = Splits {
        train: &scenes[..train_end],
        val: &scenes[train_end..train_end + held_out],
        test: &scenes[train_end + held_out..],
    };
    let report = toy_train(splits, mode, &config, &LossConfig::default())?;
    if let Some(path) = &args.history {
        write_file(path, &history_csv(&report))?;
    }
    emit_json(args.report.as_deref(), &report)
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn emit(output: Option<&Path>, text: &str) -> CliResult<()> {
    match output {
        Some(path) => write_file(path, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|()| out.flush())
                .map_err(|e| Failure::data(format!("<stdout>: {e}")))
        }
    }
}

fn emit_json<T: Serialize>(output: Option<&Path>, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::data(format!("cannot encode JSON: {e}")))?;
    text.push('\n');
    emit(output, &text)
}
