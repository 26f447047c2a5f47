//! Test-set metrics, benchmark report assembly and export.
//!
//! Output is byte-stable: floats are written with 17 significant digits and
//! JSON object keys are sorted.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cells::{predict, CellKind, Model};
use crate::data::{ScalerParams, WindowedDataset};
use crate::error::{Error, Result};
use crate::optim::OptimizerKind;
use crate::train::{RunResult, TrainConfig};

/// Header of the summary CSV.
pub const CSV_HEADER: &str = "config,cell,optimizer,final_train_loss,final_val_loss,rmse,epochs_to_threshold,stability_count,stability_sum,wall_clock_s";
/// Header of the long-form loss-curve CSV.
pub const CURVES_HEADER: &str = "config,epoch,train_loss,val_loss";

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty);
    }
    let sse: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

/// One-step-ahead predictions for every window, mapped back to price units.
pub fn predict_series(
    model: &Model,
    scaler: &ScalerParams,
    data: &WindowedDataset,
) -> Result<Vec<f64>> {
    data.samples
        .iter()
        .map(|s| predict(model, &s.inputs).map(|p| scaler.inverse_transform(p)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    /// Price units.
    pub rmse: f64,
    /// Min-max-normalized units.
    pub rmse_normalized: f64,
    pub samples: usize,
}

pub fn test_metrics(
    model: &Model,
    scaler: &ScalerParams,
    data: &WindowedDataset,
) -> Result<TestMetrics> {
    let predictions = predict_series(model, scaler, data)?;
    let targets: Vec<f64> = data
        .samples
        .iter()
        .map(|s| scaler.inverse_transform(s.target))
        .collect();
    let normalized: Vec<f64> = predictions.iter().map(|&p| scaler.transform(p)).collect();
    Ok(TestMetrics {
        rmse: rmse(&predictions, &targets)?,
        rmse_normalized: rmse(&normalized, &data.targets())?,
        samples: data.len(),
    })
}

/// A finished run together with its test-set evaluation.
#[derive(Debug, Clone)]
pub struct CompletedRun {
    pub result: RunResult,
    pub test: TestMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub config: String,
    pub cell: CellKind,
    pub optimizer: OptimizerKind,
    /// `None` on aggregate (median) rows.
    pub seed: Option<u64>,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub rmse: f64,
    pub rmse_normalized: f64,
    pub epochs_to_threshold: Option<usize>,
    pub stability_count: usize,
    pub stability_sum: f64,
    /// Only filled when timing is requested, so default reports are reproducible.
    pub wall_clock_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Natural log; `null` when the loss is exactly zero.
    pub log_train_loss: Option<f64>,
    pub log_val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub config: String,
    pub points: Vec<CurvePoint>,
}

/// Settings shared by every run in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub hidden: usize,
    pub lookback: usize,
    pub threshold: f64,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub protocol: Protocol,
    pub rows: Vec<ReportRow>,
    pub curves: Vec<Curve>,
}

fn log_loss(loss: f64) -> Result<Option<f64>> {
    if loss < 0.0 {
        return Err(Error::NegativeLoss(loss));
    }
    Ok((loss > 0.0).then(|| loss.ln()))
}

fn order_key(c: &TrainConfig) -> (CellKind, OptimizerKind) {
    (c.cell, c.optimizer)
}

/// Rows in the order LSTM Adam, LSTM NAG, GRU Adam, GRU NAG (momentum runs
/// after NAG); seeds keep their run order. Configurations with several seeds
/// get per-seed rows followed by a median row.
pub fn build_report(runs: &[CompletedRun], include_timing: bool) -> Result<BenchmarkReport> {
    let first = runs.first().ok_or(Error::Empty)?;
    let mut groups: BTreeMap<(CellKind, OptimizerKind), Vec<&CompletedRun>> = BTreeMap::new();
    let mut seeds: Vec<u64> = Vec::new();
    for run in runs {
        groups
            .entry(order_key(&run.result.config))
            .or_default()
            .push(run);
        if !seeds.contains(&run.result.config.seed) {
            seeds.push(run.result.config.seed);
        }
    }

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for ((cell, optimizer), group) in &groups {
        let multi = group.len() > 1;
        let base = format!("{} {}", cell.label(), optimizer.label());
        let mut group_rows = Vec::new();
        for run in group {
            let r = &run.result;
            let config = if multi {
                format!("{base} seed={}", r.config.seed)
            } else {
                base.clone()
            };
            let last = r.final_record();
            group_rows.push(ReportRow {
                config: config.clone(),
                cell: *cell,
                optimizer: *optimizer,
                seed: Some(r.config.seed),
                final_train_loss: last.train_loss,
                final_val_loss: last.val_loss,
                rmse: run.test.rmse,
                rmse_normalized: run.test.rmse_normalized,
                epochs_to_threshold: r.epochs_to_threshold,
                stability_count: r.stability.count,
                stability_sum: r.stability.sum,
                wall_clock_s: include_timing.then_some(r.wall_clock_s),
            });
            let points = r
                .records
                .iter()
                .map(|rec| {
                    Ok(CurvePoint {
                        epoch: rec.epoch,
                        train_loss: rec.train_loss,
                        val_loss: rec.val_loss,
                        log_train_loss: log_loss(rec.train_loss)?,
                        log_val_loss: log_loss(rec.val_loss)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            curves.push(Curve { config, points });
        }
        if multi {
            let median_row = median_row(format!("{base} median"), *cell, *optimizer, &group_rows);
            rows.extend(group_rows);
            rows.push(median_row);
        } else {
            rows.extend(group_rows);
        }
    }

    let c = &first.result.config;
    Ok(BenchmarkReport {
        protocol: Protocol {
            batch_size: 1,
            epochs: c.epochs,
            lr: c.hyper.lr,
            hidden: c.hidden,
            lookback: c.lookback,
            threshold: c.threshold,
            seeds,
        },
        rows,
        curves,
    })
}

fn median_f64(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Lower median.
fn lower_median<T: Ord + Copy>(mut xs: Vec<T>) -> T {
    xs.sort();
    xs[(xs.len() - 1) / 2]
}

fn median_row(
    config: String,
    cell: CellKind,
    optimizer: OptimizerKind,
    rows: &[ReportRow],
) -> ReportRow {
    let col = |f: fn(&ReportRow) -> f64| median_f64(rows.iter().map(f).collect());
    // Map None to usize::MAX so "never converged" ranks last.
    let epochs = lower_median(
        rows.iter()
            .map(|r| r.epochs_to_threshold.unwrap_or(usize::MAX))
            .collect(),
    );
    let timing: Option<Vec<f64>> = rows.iter().map(|r| r.wall_clock_s).collect();
    ReportRow {
        config,
        cell,
        optimizer,
        seed: None,
        final_train_loss: col(|r| r.final_train_loss),
        final_val_loss: col(|r| r.final_val_loss),
        rmse: col(|r| r.rmse),
        rmse_normalized: col(|r| r.rmse_normalized),
        epochs_to_threshold: (epochs != usize::MAX).then_some(epochs),
        stability_count: lower_median(rows.iter().map(|r| r.stability_count).collect()),
        stability_sum: col(|r| r.stability_sum),
        wall_clock_s: timing.map(median_f64),
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn summary_csv(report: &BenchmarkReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let fields = [
            csv_field(&r.config),
            r.cell.to_string(),
            r.optimizer.to_string(),
            num(r.final_train_loss),
            num(r.final_val_loss),
            num(r.rmse),
            r.epochs_to_threshold
                .map(|e| e.to_string())
                .unwrap_or_default(),
            r.stability_count.to_string(),
            num(r.stability_sum),
            r.wall_clock_s.map(num).unwrap_or_default(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn curves_csv(report: &BenchmarkReport) -> String {
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for c in &report.curves {
        for p in &c.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(&c.config),
                p.epoch,
                num(p.train_loss),
                num(p.val_loss)
            ));
        }
    }
    out
}

/// serde_json pretty printer that writes every float with 17 significant digits.
struct FixedFloats<'a>(serde_json::ser::PrettyFormatter<'a>);

impl serde_json::ser::Formatter for FixedFloats<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Sorted keys, 17-digit floats, trailing newline.
pub fn to_stable_json<T: Serialize>(value: &T) -> Result<String> {
    // Round-trip through Value: its map type is ordered by key.
    let value = serde_json::to_value(value)?;
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut buf,
        FixedFloats(serde_json::ser::PrettyFormatter::with_indent(b"  ")),
    );
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn report_json(report: &BenchmarkReport) -> Result<String> {
    to_stable_json(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
        })
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            _ => Err(Error::Config(format!(
                "unknown format `{s}` (expected csv or json)"
            ))),
        }
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Write the report into `dir`. CSV produces `report.csv` and `curves.csv`;
/// JSON produces `report.json`. Returns the paths written.
pub fn export(report: &BenchmarkReport, format: ExportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    match format {
        ExportFormat::Csv => {
            for (name, body) in [
                ("report.csv", summary_csv(report)),
                ("curves.csv", curves_csv(report)),
            ] {
                let path = dir.join(name);
                write_file(&path, &body)?;
                written.push(path);
            }
        }
        ExportFormat::Json => {
            let path = dir.join("report.json");
            write_file(&path, &report_json(report)?)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Human-readable table: one line per row, RMSE in price units.
pub fn summary_table(report: &BenchmarkReport) -> String {
    let width = report
        .rows
        .iter()
        .map(|r| r.config.len())
        .max()
        .unwrap_or(0)
        .max(26);
    let mut out = format!(
        "{:<width$}  {:>12}  {:>12}  {:>12}  {:>14}  {:>9}\n",
        "Architecture and Optimizer",
        "RMSE",
        "train loss",
        "val loss",
        "epochs<=thresh",
        "unstable"
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{:<width$}  {:>12.4}  {:>12.4e}  {:>12.4e}  {:>14}  {:>9}\n",
            r.config,
            r.rmse,
            r.final_train_loss,
            r.final_val_loss,
            r.epochs_to_threshold
                .map_or("-".to_string(), |e| e.to_string()),
            r.stability_count,
        ));
    }
    out
}
