//! `seqopt` command line: prepare | train | benchmark | gradcheck | report.
//!
//! Settings resolve as flag, then `--config` file, then built-in default.
//! Every value is validated before any training starts. Exit status is 0 on
//! success, 1 when work failed (bad data, diverged run, failed gradient
//! check) and 2 for usage or configuration errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::cells::{gradient_check, write_snapshot, CellKind, Model};
use crate::data::{
    PrepareConfig, PreparedData, PriceColumn, ScalerMode, SplitSpec, REFERENCE_PARTITION_SIZES,
};
use crate::error::{Error, Result};
use crate::eval::{self, BenchmarkReport, CompletedRun, ExportFormat};
use crate::linalg::{Rng, Vector};
use crate::optim::{Hyperparams, OptimizerKind};
use crate::train::{fit_with_progress, TrainConfig};

/// Synthetic GBM price series used when `--data` is not given.
pub const BUNDLED_SAMPLE: &str = include_str!("../data/synthetic_prices.csv");
/// 500-point sine-plus-trend series.
pub const BUNDLED_SINE_TREND: &str = include_str!("../data/sine_trend.csv");

#[derive(Parser, Debug)]
#[command(
    name = "seqopt",
    version,
    about = "LSTM/GRU optimizer benchmark on daily price series"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse, repair, split, scale and window a price CSV; print a summary.
    Prepare(PrepareArgs),
    /// Train one model and write its artifacts.
    Train(TrainArgs),
    /// Run the {LSTM, GRU} x {Adam, NAG} matrix and export the report.
    Benchmark(BenchmarkArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Re-export or print a saved report.json.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Price CSV (Yahoo layout) or a prepared.json from `prepare --out`
    /// [default: bundled synthetic sample]
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Price column to read: close | adj-close [default: close]
    #[arg(long)]
    pub column: Option<PriceColumn>,
    /// Timesteps per input window [default: 60]
    #[arg(long)]
    pub lookback: Option<usize>,
    /// Train,val,test fractions [default: 0.7,0.15,0.15]
    #[arg(long, value_name = "A,B,C")]
    pub split: Option<SplitSpec>,
    /// Min-max extrema source: train-only | full-series [default: train-only]
    #[arg(long)]
    pub scaler_mode: Option<ScalerMode>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct HyperArgs {
    /// Passes over the training windows [default: 10]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Hidden units [default: 50]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Momentum coefficient for nag and momentum [default: 0.9]
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Adam first-moment decay [default: 0.9]
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Adam second-moment decay [default: 0.999]
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Adam denominator offset [default: 1e-8]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Train-loss level for epochs-to-threshold [default: 0.001]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Clip each sample gradient to this global L2 norm [default: off]
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Reshuffle training windows each epoch with the run seed [default: off]
    #[arg(long)]
    pub shuffle: bool,
    /// Flat JSON object with the same keys as the long flags [default: none]
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Also write prepared.json into this directory [default: none]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Flat JSON object with the same keys as the long flags [default: none]
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// lstm | gru [default: gru]
    #[arg(long)]
    pub cell: Option<CellKind>,
    /// adam | nag | momentum [default: adam]
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    /// Seed for initialization and shuffling [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Artifact directory [default: out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Print gradient-evaluation counts to stderr [default: off]
    #[arg(long)]
    pub instrument: bool,
    /// Record wall-clock seconds in the artifacts, making them run-dependent [default: off]
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug, Clone)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Single seed [default: 1]
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Comma-separated seed list; adds a median row per configuration [default: none]
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Report directory [default: out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// csv | json [default: both]
    #[arg(long)]
    pub format: Option<ExportFormat>,
    /// Print gradient-evaluation counts per run to stderr [default: off]
    #[arg(long)]
    pub instrument: bool,
    /// Record wall-clock seconds in the report, making it run-dependent [default: off]
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug, Clone)]
pub struct GradcheckArgs {
    /// lstm | gru [default: both]
    #[arg(long)]
    pub cell: Option<CellKind>,
    /// Maximum relative error per entry
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// First seed of the sweep
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Random instances per cell type
    #[arg(long, default_value_t = 10)]
    pub instances: u64,
    /// Hidden units of each instance
    #[arg(long, default_value_t = 4)]
    pub hidden: usize,
    /// Timesteps of each instance
    #[arg(long, default_value_t = 5)]
    pub lookback: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ReportArgs {
    /// report.json written by `benchmark` (required)
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Directory to re-export into [default: print only]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// csv | json [default: both]
    #[arg(long)]
    pub format: Option<ExportFormat>,
}

/// Keys accepted by `--config`. Anything else is rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub column: Option<PriceColumn>,
    pub lookback: Option<usize>,
    pub split: Option<String>,
    pub scaler_mode: Option<ScalerMode>,
    pub cell: Option<CellKind>,
    pub optimizer: Option<OptimizerKind>,
    pub epochs: Option<usize>,
    pub hidden: Option<usize>,
    pub lr: Option<f64>,
    pub momentum: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub threshold: Option<f64>,
    pub clip_norm: Option<f64>,
    pub shuffle: Option<bool>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub format: Option<ExportFormat>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Failure category; decides the exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Run(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Run(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Run(m) => m,
        }
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn run_err(e: Error) -> Failure {
    Failure::Run(e.to_string())
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load_config(path: Option<&Path>) -> CliResult<FileConfig> {
    path.map_or(Ok(FileConfig::default()), |p| {
        FileConfig::load(p).map_err(usage)
    })
}

/// Where the prices come from, resolved but not yet read.
#[derive(Debug, Clone)]
struct DataSource {
    path: Option<PathBuf>,
    config: PrepareConfig,
    /// Lookback / split / scaler flags that were set explicitly.
    explicit: bool,
}

fn resolve_data(args: &DataArgs, file: &FileConfig) -> CliResult<DataSource> {
    let split = match (&args.split, &file.split) {
        (Some(s), _) => Some(*s),
        (None, Some(s)) => Some(s.parse().map_err(usage)?),
        (None, None) => None,
    };
    let defaults = PrepareConfig::default();
    let lookback = args.lookback.or(file.lookback);
    let scaler_mode = args.scaler_mode.or(file.scaler_mode);
    let config = PrepareConfig {
        lookback: lookback.unwrap_or(defaults.lookback),
        split: split.unwrap_or(defaults.split),
        scaler_mode: scaler_mode.unwrap_or(defaults.scaler_mode),
        column: args.column.or(file.column).unwrap_or(defaults.column),
    };
    if config.lookback == 0 {
        return Err(Failure::Usage("lookback must be >= 1".into()));
    }
    config.split.validate().map_err(usage)?;
    Ok(DataSource {
        path: args.data.clone().or_else(|| file.data.clone()),
        config,
        explicit: lookback.is_some() || split.is_some() || scaler_mode.is_some(),
    })
}

fn with_path(path: &Path, e: Error) -> Failure {
    Failure::Run(format!("{}: {e}", path.display()))
}

fn load_data(src: &DataSource) -> CliResult<PreparedData> {
    let Some(path) = &src.path else {
        return PreparedData::from_csv(BUNDLED_SAMPLE.as_bytes(), src.config).map_err(run_err);
    };
    let bytes = std::fs::read(path).map_err(|e| run_err(Error::io(path, e)))?;
    if path.extension().is_some_and(|e| e == "json") {
        let prepared: PreparedData =
            serde_json::from_slice(&bytes).map_err(|e| with_path(path, e.into()))?;
        if src.explicit && prepared.config != src.config {
            return Err(Failure::Usage(format!(
                "{} was prepared with lookback {}, split {:?}, scaler {}; drop the data flags or re-run prepare",
                path.display(),
                prepared.config.lookback,
                prepared.config.split,
                prepared.config.scaler_mode
            )));
        }
        return Ok(prepared);
    }
    PreparedData::from_csv(&bytes, src.config).map_err(|e| with_path(path, e))
}

fn resolve_hyper(args: &HyperArgs, file: &FileConfig, base: TrainConfig) -> TrainConfig {
    let d = Hyperparams::default();
    TrainConfig {
        epochs: args.epochs.or(file.epochs).unwrap_or(base.epochs),
        hidden: args.hidden.or(file.hidden).unwrap_or(base.hidden),
        hyper: Hyperparams {
            lr: args.lr.or(file.lr).unwrap_or(d.lr),
            momentum: args.momentum.or(file.momentum).unwrap_or(d.momentum),
            beta1: args.beta1.or(file.beta1).unwrap_or(d.beta1),
            beta2: args.beta2.or(file.beta2).unwrap_or(d.beta2),
            epsilon: args.epsilon.or(file.epsilon).unwrap_or(d.epsilon),
        },
        threshold: args.threshold.or(file.threshold).unwrap_or(base.threshold),
        clip_norm: args.clip_norm.or(file.clip_norm),
        shuffle: args.shuffle || file.shuffle.unwrap_or(false),
        ..base
    }
}

fn write_out(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| run_err(Error::io(path, e)))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| run_err(Error::io(dir, e)))
}

pub fn cmd_prepare(args: &PrepareArgs) -> CliResult<()> {
    let file = load_config(args.config.as_deref())?;
    let src = resolve_data(&args.data, &file)?;
    let out = args.out.clone().or_else(|| file.out.clone());
    let prepared = load_data(&src)?;
    let c = &prepared.config;
    let p = &prepared.partitions;
    let (wt, wv, ws) = prepared.window_counts();
    let (rt, rv, rs) = REFERENCE_PARTITION_SIZES;
    let source = src
        .path
        .as_ref()
        .map_or("bundled sample".to_string(), |p| p.display().to_string());
    println!("source\t{source}");
    println!("rows\t{}", p.train.len() + p.val.len() + p.test.len());
    println!("repaired\t{}", prepared.repaired);
    println!("lookback\t{}", c.lookback);
    println!(
        "scaler\t{}\tmin={}\tmax={}",
        c.scaler_mode, prepared.scaler.min_x, prepared.scaler.max_x
    );
    println!("partition\trows\twindows\treference");
    println!("train\t{}\t{wt}\t{rt}", p.train.len());
    println!("val\t{}\t{wv}\t{rv}", p.val.len());
    println!("test\t{}\t{ws}\t{rs}", p.test.len());
    if let Some(dir) = out {
        create_dir(&dir)?;
        let path = dir.join("prepared.json");
        write_out(&path, &eval::to_stable_json(&prepared).map_err(run_err)?)?;
        println!("wrote\t{}", path.display());
    }
    Ok(())
}

fn resolve_train(args: &TrainArgs) -> CliResult<(DataSource, TrainConfig, PathBuf)> {
    let file = load_config(args.hyper.config.as_deref())?;
    let src = resolve_data(&args.data, &file)?;
    let base = TrainConfig {
        cell: args.cell.or(file.cell).unwrap_or(CellKind::Gru),
        optimizer: args
            .optimizer
            .or(file.optimizer)
            .unwrap_or(OptimizerKind::Adam),
        seed: args.seed.or(file.seed).unwrap_or(1),
        lookback: src.config.lookback,
        ..TrainConfig::default()
    };
    let config = resolve_hyper(&args.hyper, &file, base);
    config.validate().map_err(usage)?;
    let out = args
        .out
        .clone()
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((src, config, out))
}

fn instrument_line(label: &str, seed: u64, evals: u64, samples: usize, epochs: usize) -> String {
    let per_sample = evals as f64 / (samples * epochs) as f64;
    format!("instrument\t{label}\tseed={seed}\tgrad_evals={evals}\tper_sample={per_sample}")
}

/// Replace run-dependent timing fields with null.
fn strip_timing(v: &mut serde_json::Value) {
    if let Some(obj) = v.as_object_mut() {
        obj.insert("wall_clock_s".into(), serde_json::Value::Null);
        if let Some(records) = obj.get_mut("records").and_then(|r| r.as_array_mut()) {
            for r in records {
                if let Some(r) = r.as_object_mut() {
                    r.insert("seconds".into(), serde_json::Value::Null);
                }
            }
        }
    }
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let (src, config, out) = resolve_train(args)?;
    let prepared = load_data(&src)?;
    let mut config = config;
    config.lookback = prepared.config.lookback;
    let data = prepared.datasets().map_err(run_err)?;

    let mut stderr = std::io::stderr();
    let result =
        fit_with_progress(&config, &data.train, &data.val, Some(&mut stderr)).map_err(run_err)?;
    let test = eval::test_metrics(&result.model, &prepared.scaler, &data.test).map_err(run_err)?;
    if args.instrument {
        eprintln!(
            "{}",
            instrument_line(
                &config.label(),
                config.seed,
                result.grad_evals,
                data.train.len(),
                config.epochs
            )
        );
    }

    let mut run = serde_json::to_value(&result).map_err(|e| run_err(e.into()))?;
    if !args.timing {
        strip_timing(&mut run);
    }
    if let Some(obj) = run.as_object_mut() {
        obj.insert(
            "test".into(),
            serde_json::to_value(test).map_err(|e| run_err(e.into()))?,
        );
        obj.insert(
            "scaler".into(),
            serde_json::to_value(prepared.scaler).map_err(|e| run_err(e.into()))?,
        );
    }

    let mut epochs = String::from("epoch,train_loss,val_loss,seconds\n");
    for r in &result.records {
        let secs = if args.timing {
            format!("{:.16e}", r.seconds)
        } else {
            String::new()
        };
        epochs.push_str(&format!(
            "{},{:.16e},{:.16e},{secs}\n",
            r.epoch, r.train_loss, r.val_loss
        ));
    }

    create_dir(&out)?;
    let files = [
        ("run.json", eval::to_stable_json(&run).map_err(run_err)?),
        ("epochs.csv", epochs),
        ("model.txt", write_snapshot(&result.model)),
    ];
    for (name, body) in &files {
        write_out(&out.join(name), body)?;
    }

    let last = result.final_record();
    println!("config\t{}\tseed={}", config.label(), config.seed);
    println!("final_train_loss\t{:e}", last.train_loss);
    println!("final_val_loss\t{:e}", last.val_loss);
    println!("rmse\t{}", test.rmse);
    println!("rmse_normalized\t{}", test.rmse_normalized);
    println!(
        "epochs_to_threshold\t{}",
        result
            .epochs_to_threshold
            .map_or("-".to_string(), |e| e.to_string())
    );
    println!("wrote\t{}", out.display());
    Ok(())
}

/// The benchmark matrix in report order.
pub const MATRIX: [(CellKind, OptimizerKind); 4] = [
    (CellKind::Lstm, OptimizerKind::Adam),
    (CellKind::Lstm, OptimizerKind::Nag),
    (CellKind::Gru, OptimizerKind::Adam),
    (CellKind::Gru, OptimizerKind::Nag),
];

fn resolve_benchmark(
    args: &BenchmarkArgs,
) -> CliResult<(DataSource, Vec<TrainConfig>, PathBuf, Option<ExportFormat>)> {
    let file = load_config(args.hyper.config.as_deref())?;
    if file.cell.is_some() || file.optimizer.is_some() {
        return Err(Failure::Usage(
            "benchmark always runs the LSTM/GRU x Adam/NAG matrix; remove cell/optimizer from the config file".into(),
        ));
    }
    let src = resolve_data(&args.data, &file)?;
    let seeds = match (&args.seeds, args.seed) {
        (Some(s), _) => s.clone(),
        (None, Some(s)) => vec![s],
        (None, None) => file
            .seeds
            .clone()
            .or_else(|| file.seed.map(|s| vec![s]))
            .unwrap_or(vec![1]),
    };
    if seeds.is_empty() {
        return Err(Failure::Usage("--seeds must list at least one seed".into()));
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(Failure::Usage("--seeds contains duplicates".into()));
    }
    let base = TrainConfig {
        lookback: src.config.lookback,
        ..TrainConfig::default()
    };
    let template = resolve_hyper(&args.hyper, &file, base);
    let mut configs = Vec::new();
    for (cell, optimizer) in MATRIX {
        for &seed in &seeds {
            let c = TrainConfig {
                cell,
                optimizer,
                seed,
                ..template
            };
            c.validate().map_err(usage)?;
            configs.push(c);
        }
    }
    let out = args
        .out
        .clone()
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((src, configs, out, args.format.or(file.format)))
}

/// Run every config on a small worker pool. Results keep input order.
pub fn run_matrix(
    configs: &[TrainConfig],
    prepared: &PreparedData,
    instrument: bool,
) -> Result<Vec<(TrainConfig, Result<CompletedRun>)>> {
    let data = prepared.datasets()?;
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(configs.len())
        .max(1);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CompletedRun>>>> =
        Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(config) = configs.get(i) else { break };
                let mut stderr = std::io::stderr();
                let run = fit_with_progress(config, &data.train, &data.val, Some(&mut stderr))
                    .and_then(|result| {
                        if instrument {
                            let line = instrument_line(
                                &config.label(),
                                config.seed,
                                result.grad_evals,
                                data.train.len(),
                                config.epochs,
                            );
                            let _ = writeln!(stderr, "{line}");
                        }
                        let test = eval::test_metrics(&result.model, &prepared.scaler, &data.test)?;
                        Ok(CompletedRun { result, test })
                    });
                results.lock().expect("worker panicked")[i] = Some(run);
            });
        }
    });
    let results = results.into_inner().expect("worker panicked");
    Ok(configs
        .iter()
        .zip(results)
        .map(|(c, r)| (*c, r.expect("every job ran")))
        .collect())
}

fn export_report(
    report: &BenchmarkReport,
    format: Option<ExportFormat>,
    dir: &Path,
) -> CliResult<Vec<PathBuf>> {
    let formats = match format {
        Some(f) => vec![f],
        None => vec![ExportFormat::Csv, ExportFormat::Json],
    };
    let mut written = Vec::new();
    for f in formats {
        written.extend(eval::export(report, f, dir).map_err(run_err)?);
    }
    Ok(written)
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> CliResult<()> {
    let (src, configs, out, format) = resolve_benchmark(args)?;
    let prepared = load_data(&src)?;
    let configs: Vec<TrainConfig> = configs
        .into_iter()
        .map(|c| TrainConfig {
            lookback: prepared.config.lookback,
            ..c
        })
        .collect();

    let outcomes = run_matrix(&configs, &prepared, args.instrument).map_err(run_err)?;
    let mut completed = Vec::new();
    let mut failures = Vec::new();
    for (config, outcome) in outcomes {
        match outcome {
            Ok(run) => completed.push(run),
            Err(e) => failures.push(format!("{} seed={}: {e}", config.label(), config.seed)),
        }
    }
    for f in &failures {
        eprintln!("error: {f}");
    }
    if completed.is_empty() {
        return Err(Failure::Run("every benchmark run failed".into()));
    }

    let report = eval::build_report(&completed, args.timing).map_err(run_err)?;
    create_dir(&out)?;
    let written = export_report(&report, format, &out)?;
    print!("{}", eval::summary_table(&report));
    for p in written {
        println!("wrote\t{}", p.display());
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Run(format!(
            "{} of {} runs failed",
            failures.len(),
            configs.len()
        )))
    }
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> CliResult<()> {
    if !(args.tolerance.is_finite() && args.tolerance > 0.0) {
        return Err(Failure::Usage(format!(
            "tolerance must be > 0, got {}",
            args.tolerance
        )));
    }
    if args.hidden == 0 || args.lookback == 0 || args.instances == 0 {
        return Err(Failure::Usage(
            "hidden, lookback and instances must be >= 1".into(),
        ));
    }
    let cells: Vec<CellKind> = args.cell.map_or(CellKind::ALL.to_vec(), |c| vec![c]);
    let mut all_passed = true;
    println!("cell\tseed\tblock\tmax_rel_error\tstatus");
    for cell in cells {
        let mut worst = 0.0f64;
        for seed in args.seed..args.seed + args.instances {
            let mut rng = Rng::new(seed);
            let model = Model::init(cell, 1, args.hidden, &mut rng);
            let window: Vec<Vector> = (0..args.lookback)
                .map(|_| Vector::from(vec![rng.uniform(1.0)]))
                .collect();
            let report = gradient_check(&model, &window, args.tolerance).map_err(run_err)?;
            for b in &report.blocks {
                let status = if b.passed { "ok" } else { "FAIL" };
                println!(
                    "{cell}\t{seed}\t{}\t{:e}\t{status}",
                    b.name, b.max_rel_error
                );
            }
            worst = worst.max(report.max_rel_error());
            all_passed &= report.passed();
        }
        println!(
            "{cell}\tall\tmax\t{worst:e}\t{}",
            if worst <= args.tolerance {
                "ok"
            } else {
                "FAIL"
            }
        );
    }
    if all_passed {
        Ok(())
    } else {
        Err(Failure::Run(format!(
            "gradient check failed at tolerance {:e}",
            args.tolerance
        )))
    }
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<()> {
    let text =
        std::fs::read_to_string(&args.data).map_err(|e| run_err(Error::io(&args.data, e)))?;
    let report: BenchmarkReport =
        serde_json::from_str(&text).map_err(|e| with_path(&args.data, e.into()))?;
    print!("{}", eval::summary_table(&report));
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        for p in export_report(&report, args.format, dir)? {
            println!("wrote\t{}", p.display());
        }
    }
    Ok(())
}

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Parse `std::env::args`, run, and map the outcome to an exit status.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
