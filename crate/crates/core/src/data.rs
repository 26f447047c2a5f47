//! Price ingestion and preprocessing.
//!
//! Pipeline: parse a Yahoo-Finance-style CSV, fill interior gaps by linear
//! interpolation, split chronologically into train/validation/test, fit a
//! min-max scaler, and cut each partition into sliding windows on its own so
//! no sample straddles a boundary.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Rng, Vector};

/// Reference partition sizes for a ten-year daily AAPL series; `prepare` prints them next to its own.
pub const REFERENCE_PARTITION_SIZES: (usize, usize, usize) = (1862, 402, 401);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriceColumn {
    #[default]
    Close,
    AdjClose,
}

impl PriceColumn {
    pub fn header(self) -> &'static str {
        match self {
            PriceColumn::Close => "Close",
            PriceColumn::AdjClose => "Adj Close",
        }
    }
}

impl fmt::Display for PriceColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriceColumn::Close => "close",
            PriceColumn::AdjClose => "adj-close",
        })
    }
}

impl FromStr for PriceColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "close" | "Close" => Ok(PriceColumn::Close),
            "adj-close" | "Adj Close" => Ok(PriceColumn::AdjClose),
            _ => Err(Error::Csv(format!(
                "unknown price column `{s}` (expected close or adj-close)"
            ))),
        }
    }
}

/// Parsed rows before gap repair. `None` marks an unusable price cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<Option<f64>>,
}

impl RawSeries {
    pub fn missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub dates: Vec<NaiveDate>,
    pub close: Vec<f64>,
}

impl PriceSeries {
    pub fn len(&self) -> usize {
        self.close.len()
    }

    pub fn is_empty(&self) -> bool {
        self.close.is_empty()
    }

    fn slice(&self, range: std::ops::Range<usize>) -> PriceSeries {
        PriceSeries {
            dates: self.dates[range.clone()].to_vec(),
            close: self.close[range].to_vec(),
        }
    }

    /// Yahoo-format CSV with every price column set to the close.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Date,Open,High,Low,Close,Adj Close,Volume\n");
        for (d, c) in self.dates.iter().zip(&self.close) {
            out.push_str(&format!("{d},{c:.6},{c:.6},{c:.6},{c:.6},{c:.6},0\n"));
        }
        out
    }
}

/// Read the date column and one price column. Rows come back sorted by date.
/// Price cells that do not parse as a positive finite number are recorded as
/// missing; dates must parse and be unique.
pub fn parse_csv(bytes: &[u8], column: PriceColumn) -> Result<RawSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let date_col = find("Date")?;
    let price_col = find(column.header())?;

    let mut rows: Vec<(NaiveDate, Option<f64>, u64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let date_cell = record.get(date_col).unwrap_or("");
        let date = NaiveDate::parse_from_str(date_cell, "%Y-%m-%d")
            .map_err(|_| Error::Csv(format!("line {line}: bad date `{date_cell}`")))?;
        let price = record
            .get(price_col)
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|p| p.is_finite() && *p > 0.0);
        rows.push((date, price, line));
    }
    if rows.is_empty() {
        return Err(Error::NoDataRows);
    }
    rows.sort_by_key(|r| r.0);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            let line = pair[0].2.max(pair[1].2);
            return Err(Error::DuplicateDate {
                date: pair[1].0.to_string(),
                line,
            });
        }
    }
    Ok(RawSeries {
        dates: rows.iter().map(|r| r.0).collect(),
        values: rows.iter().map(|r| r.1).collect(),
    })
}

/// Fill each interior gap by linear interpolation between its nearest present
/// neighbours. Present values are never touched.
pub fn repair_missing(raw: &RawSeries) -> Result<PriceSeries> {
    let v = &raw.values;
    if v.iter().filter(|x| x.is_some()).count() < 2 {
        return Err(Error::Repair("fewer than two present values".into()));
    }
    if v.first().copied().flatten().is_none() || v.last().copied().flatten().is_none() {
        return Err(Error::Repair(
            "first and last values must be present".into(),
        ));
    }
    let mut close = Vec::with_capacity(v.len());
    let mut last_present = 0;
    for (i, x) in v.iter().enumerate() {
        match x {
            Some(x) => {
                close.push(*x);
                last_present = i;
            }
            None => {
                let next = (i + 1..v.len())
                    .find(|&j| v[j].is_some())
                    .expect("last value present");
                let (a, b) = (v[last_present].unwrap(), v[next].unwrap());
                let frac = (i - last_present) as f64 / (next - last_present) as f64;
                close.push(a + (b - a) * frac);
            }
        }
    }
    Ok(PriceSeries {
        dates: raw.dates.clone(),
        close,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min_x: f64,
    pub max_x: f64,
}

pub fn fit_scaler(values: &[f64]) -> Result<ScalerParams> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    let (min_x, max_x) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if max_x <= min_x {
        return Err(Error::DegenerateRange {
            min: min_x,
            max: max_x,
        });
    }
    Ok(ScalerParams { min_x, max_x })
}

impl ScalerParams {
    pub fn range(&self) -> f64 {
        self.max_x - self.min_x
    }

    /// `(x − min) / (max − min)`, unclamped.
    pub fn transform(&self, x: f64) -> f64 {
        (x - self.min_x) / self.range()
    }

    pub fn inverse_transform(&self, x_norm: f64) -> f64 {
        x_norm * self.range() + self.min_x
    }

    pub fn transform_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.transform(x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalerMode {
    /// Extrema from the training partition only.
    #[default]
    TrainOnly,
    /// Extrema from the whole series, as min-max scaling is often stated.
    FullSeries,
}

impl fmt::Display for ScalerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalerMode::TrainOnly => "train-only",
            ScalerMode::FullSeries => "full-series",
        })
    }
}

impl FromStr for ScalerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train-only" => Ok(ScalerMode::TrainOnly),
            "full-series" => Ok(ScalerMode::FullSeries),
            _ => Err(Error::Config(format!(
                "unknown scaler mode `{s}` (expected train-only or full-series)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// One single-feature input vector per timestep.
    pub inputs: Vec<Vector>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    pub lookback: usize,
    pub samples: Vec<Sample>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.target).collect()
    }
}

/// Sample `k` is window `[k, k+L)` with target `k+L`; `len − L` samples total.
pub fn make_windows(series: &[f64], lookback: usize) -> Result<WindowedDataset> {
    if lookback == 0 || series.len() <= lookback {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            lookback,
        });
    }
    let samples = (0..series.len() - lookback)
        .map(|k| Sample {
            inputs: series[k..k + lookback]
                .iter()
                .map(|&x| Vector::from(vec![x]))
                .collect(),
            target: series[k + lookback],
        })
        .collect();
    Ok(WindowedDataset { lookback, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.70,
            val_frac: 0.15,
            test_frac: 0.15,
        }
    }
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64) -> Result<Self> {
        let spec = SplitSpec {
            train_frac,
            val_frac,
            test_frac,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        if fr.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::Split(format!(
                "fractions must be positive, got {fr:?}"
            )));
        }
        let sum: f64 = fr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Split(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// `floor(f·n)` for validation and test, remainder to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let val = (self.val_frac * n as f64).floor() as usize;
        let test = (self.test_frac * n as f64).floor() as usize;
        (n - val - test, val, test)
    }
}

impl FromStr for SplitSpec {
    type Err = Error;

    /// `"0.7,0.15,0.15"`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Split(format!("cannot parse `{s}`")))?;
        match parts.as_slice() {
            [a, b, c] => SplitSpec::new(*a, *b, *c),
            _ => Err(Error::Split(format!("expected three fractions, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partitions {
    pub train: PriceSeries,
    pub val: PriceSeries,
    pub test: PriceSeries,
}

/// Contiguous train / validation / test segments, earliest first.
pub fn chronological_split(
    series: &PriceSeries,
    spec: &SplitSpec,
    lookback: usize,
) -> Result<Partitions> {
    spec.validate()?;
    let (n_train, n_val, _) = spec.sizes(series.len());
    let n = series.len();
    let parts = Partitions {
        train: series.slice(0..n_train),
        val: series.slice(n_train..n_train + n_val),
        test: series.slice(n_train + n_val..n),
    };
    for (name, p) in [
        ("train", &parts.train),
        ("validation", &parts.val),
        ("test", &parts.test),
    ] {
        if p.len() < lookback + 1 {
            return Err(Error::PartitionTooSmall {
                name,
                len: p.len(),
                needed: lookback + 1,
            });
        }
    }
    Ok(parts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub lookback: usize,
    pub split: SplitSpec,
    pub scaler_mode: ScalerMode,
    pub column: PriceColumn,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            lookback: 60,
            split: SplitSpec::default(),
            scaler_mode: ScalerMode::TrainOnly,
            column: PriceColumn::Close,
        }
    }
}

/// Repaired, split and scaled data; serializable so a prepared run can be
/// reloaded without the original CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedData {
    pub config: PrepareConfig,
    pub scaler: ScalerParams,
    pub repaired: usize,
    pub partitions: Partitions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
}

impl PreparedData {
    pub fn from_series(
        series: &PriceSeries,
        repaired: usize,
        config: PrepareConfig,
    ) -> Result<Self> {
        let partitions = chronological_split(series, &config.split, config.lookback)?;
        let scaler = match config.scaler_mode {
            ScalerMode::TrainOnly => fit_scaler(&partitions.train.close)?,
            ScalerMode::FullSeries => fit_scaler(&series.close)?,
        };
        Ok(PreparedData {
            config,
            scaler,
            repaired,
            partitions,
        })
    }

    pub fn from_csv(bytes: &[u8], config: PrepareConfig) -> Result<Self> {
        let raw = parse_csv(bytes, config.column)?;
        let series = repair_missing(&raw)?;
        Self::from_series(&series, raw.missing(), config)
    }

    pub fn datasets(&self) -> Result<Datasets> {
        let window = |p: &PriceSeries| {
            make_windows(&self.scaler.transform_all(&p.close), self.config.lookback)
        };
        Ok(Datasets {
            train: window(&self.partitions.train)?,
            val: window(&self.partitions.val)?,
            test: window(&self.partitions.test)?,
        })
    }

    pub fn window_counts(&self) -> (usize, usize, usize) {
        let l = self.config.lookback;
        let p = &self.partitions;
        (p.train.len() - l, p.val.len() - l, p.test.len() - l)
    }
}

/// Weekday calendar starting at `start` (weekends skipped, holidays ignored).
pub fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// `100 + 0.1·t + 10·sin(2πt/50)` on weekdays from 2020-01-01.
pub fn synthetic_sine_trend(n: usize) -> PriceSeries {
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");
    let close = (0..n)
        .map(|t| {
            let t = t as f64;
            100.0 + 0.1 * t + 10.0 * (2.0 * std::f64::consts::PI * t / 50.0).sin()
        })
        .collect();
    PriceSeries {
        dates: trading_days(start, n),
        close,
    }
}

/// Geometric Brownian motion with daily drift `mu` and volatility `sigma`.
pub fn synthetic_gbm(n: usize, start_price: f64, mu: f64, sigma: f64, seed: u64) -> PriceSeries {
    let mut rng = Rng::new(seed);
    let mut price = start_price;
    let mut close = Vec::with_capacity(n);
    for _ in 0..n {
        close.push(price);
        // Box-Muller; 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - rng.next_f64();
        let u2 = rng.next_f64();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        price *= (mu - 0.5 * sigma * sigma + sigma * z).exp();
    }
    let start = NaiveDate::from_ymd_opt(2014, 1, 2).expect("valid date");
    PriceSeries {
        dates: trading_days(start, n),
        close,
    }
}
