//! Batch-size-one training.
//!
//! Each epoch walks the training windows in chronological order. Per sample:
//! forward, squared-error loss, backward, one optimizer step. NAG additionally
//! runs forward/backward at its look-ahead point, so it costs two gradient
//! evaluations per sample where Adam and momentum cost one.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cells::{backward_sequence, forward_sequence, predict, CellKind, Gradients, Model};
use crate::data::{Sample, WindowedDataset};
use crate::error::{Error, Result};
use crate::linalg::Rng;
use crate::optim::{clip_by_global_norm, Hyperparams, Optimizer, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub cell: CellKind,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub hidden: usize,
    pub lookback: usize,
    pub hyper: Hyperparams,
    pub seed: u64,
    /// Train-loss level for [`convergence_speed`].
    pub threshold: f64,
    /// Optional global-norm gradient clipping; off by default.
    pub clip_norm: Option<f64>,
    /// Seeded reshuffle of the training windows each epoch; off by default.
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            cell: CellKind::Gru,
            optimizer: OptimizerKind::Adam,
            epochs: 10,
            hidden: 50,
            lookback: 60,
            hyper: Hyperparams::default(),
            seed: 1,
            threshold: 1e-3,
            clip_norm: None,
            shuffle: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden must be >= 1".into()));
        }
        if self.lookback == 0 {
            return Err(Error::Config("lookback must be >= 1".into()));
        }
        if self.threshold.is_nan() {
            return Err(Error::Config("threshold must not be NaN".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!("clip norm must be > 0, got {c}")));
            }
        }
        self.hyper.validate(self.optimizer)
    }

    /// `"LSTM Adam"` style name.
    pub fn label(&self) -> String {
        format!("{} {}", self.cell.label(), self.optimizer.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stability {
    /// Epochs whose train loss rose relative to the previous epoch.
    pub count: usize,
    /// Sum of those increases.
    pub sum: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub config: TrainConfig,
    pub records: Vec<EpochRecord>,
    #[serde(skip)]
    pub model: Model,
    pub epochs_to_threshold: Option<usize>,
    pub stability: Stability,
    pub wall_clock_s: f64,
    /// Forward/backward passes used for parameter updates.
    pub grad_evals: u64,
}

impl RunResult {
    pub fn final_record(&self) -> &EpochRecord {
        self.records.last().expect("at least one epoch")
    }
}

/// `(loss, d loss / d prediction)` for squared error.
pub fn mse_loss(prediction: f64, target: f64) -> (f64, f64) {
    let diff = prediction - target;
    (diff * diff, 2.0 * diff)
}

/// Loss and parameter gradients for one sample.
pub fn sample_gradient(model: &Model, sample: &Sample) -> Result<(f64, Gradients)> {
    let (prediction, cache) = forward_sequence(model, &sample.inputs)?;
    let (loss, d_prediction) = mse_loss(prediction, sample.target);
    let grads = backward_sequence(model, &cache, d_prediction)?;
    Ok((loss, grads))
}

#[derive(Debug, Clone, Default)]
pub struct EpochOptions {
    /// 1-based, used in diagnostics.
    pub epoch: usize,
    pub clip_norm: Option<f64>,
    /// Visit order over sample indices; chronological when `None`.
    pub order: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub grad_evals: u64,
}

/// One pass over `data`; the reported loss of each sample is measured before
/// its update.
pub fn train_epoch(
    model: &mut Model,
    optimizer: &mut Optimizer,
    data: &WindowedDataset,
    opts: &EpochOptions,
) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(Error::Empty);
    }
    let chronological: Vec<usize>;
    let order = match &opts.order {
        Some(o) => o.as_slice(),
        None => {
            chronological = (0..data.len()).collect();
            &chronological
        }
    };
    let mut total = 0.0;
    let mut evals = 0u64;
    for &idx in order {
        let sample = &data.samples[idx];
        let (loss, mut grads) = sample_gradient(model, sample)?;
        evals += 1;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: opts.epoch,
                sample: idx,
            });
        }
        if let Some(c) = opts.clip_norm {
            clip_by_global_norm(&mut grads, c);
        }
        total += loss;
        let lookahead = |shifted: &Model| {
            evals += 1;
            let (_, mut g) = sample_gradient(shifted, sample)?;
            if let Some(c) = opts.clip_norm {
                clip_by_global_norm(&mut g, c);
            }
            Ok(g)
        };
        optimizer
            .step(model, &grads, lookahead)
            .map_err(|e| match e {
                Error::NonFiniteGradient { block } => Error::Diverged {
                    block,
                    epoch: opts.epoch,
                    sample: idx,
                },
                other => other,
            })?;
    }
    Ok(EpochStats {
        mean_loss: total / order.len() as f64,
        grad_evals: evals,
    })
}

/// Mean squared error over `data`, forward only.
pub fn evaluate(model: &Model, data: &WindowedDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty);
    }
    let mut total = 0.0;
    for s in &data.samples {
        total += mse_loss(predict(model, &s.inputs)?, s.target).0;
    }
    Ok(total / data.len() as f64)
}

/// First 1-based epoch whose train loss is `<= threshold`.
pub fn convergence_speed(records: &[EpochRecord], threshold: f64) -> Option<usize> {
    records
        .iter()
        .find(|r| r.train_loss <= threshold)
        .map(|r| r.epoch)
}

pub fn stability_score(records: &[EpochRecord]) -> Stability {
    let mut s = Stability::default();
    for w in records.windows(2) {
        let delta = w[1].train_loss - w[0].train_loss;
        if delta > 0.0 {
            s.count += 1;
            s.sum += delta;
        }
    }
    s
}

pub fn fit(
    config: &TrainConfig,
    train: &WindowedDataset,
    val: &WindowedDataset,
) -> Result<RunResult> {
    fit_with_progress(config, train, val, None)
}

/// As [`fit`], additionally writing one tab-separated line per epoch:
/// `label  epoch  train_loss  val_loss  seconds`.
pub fn fit_with_progress(
    config: &TrainConfig,
    train: &WindowedDataset,
    val: &WindowedDataset,
    mut progress: Option<&mut dyn Write>,
) -> Result<RunResult> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty);
    }
    let input = train.samples[0].inputs[0].len();
    let mut rng = Rng::new(config.seed);
    let mut model = Model::init(config.cell, input, config.hidden, &mut rng);
    let mut optimizer = Optimizer::new(config.optimizer, &config.hyper)?;

    let started = Instant::now();
    let mut records = Vec::with_capacity(config.epochs);
    let mut grad_evals = 0;
    for epoch in 1..=config.epochs {
        let t0 = Instant::now();
        let order = config.shuffle.then(|| {
            let mut o: Vec<usize> = (0..train.len()).collect();
            rng.shuffle(&mut o);
            o
        });
        let opts = EpochOptions {
            epoch,
            clip_norm: config.clip_norm,
            order,
        };
        let stats = train_epoch(&mut model, &mut optimizer, train, &opts)?;
        grad_evals += stats.grad_evals;
        let val_loss = evaluate(&model, val)?;
        let record = EpochRecord {
            epoch,
            train_loss: stats.mean_loss,
            val_loss,
            seconds: t0.elapsed().as_secs_f64(),
        };
        if let Some(w) = progress.as_deref_mut() {
            let _ = writeln!(
                w,
                "{}\t{}\t{:e}\t{:e}\t{:.3}",
                config.label(),
                epoch,
                record.train_loss,
                record.val_loss,
                record.seconds
            );
        }
        records.push(record);
    }

    Ok(RunResult {
        config: *config,
        epochs_to_threshold: convergence_speed(&records, config.threshold),
        stability: stability_score(&records),
        records,
        model,
        wall_clock_s: started.elapsed().as_secs_f64(),
        grad_evals,
    })
}


#[cfg(test)]
mod fit_tests {
    use super::*;
    use crate::data::{make_windows, synthetic_sine_trend};

    fn small_data() -> (WindowedDataset, WindowedDataset) {
        let s = synthetic_sine_trend(80);
        let lo = s.close.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.close.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm: Vec<f64> = s.close.iter().map(|v| (v - lo) / (hi - lo)).collect();
        (
            make_windows(&norm[..60], 8).unwrap(),
            make_windows(&norm[60..], 8).unwrap(),
        )
    }

    fn config(cell: CellKind, optimizer: OptimizerKind) -> TrainConfig {
        TrainConfig {
            cell,
            optimizer,
            epochs: 3,
            hidden: 4,
            lookback: 8,
            ..Default::default()
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let (train, val) = small_data();
        for cell in CellKind::ALL {
            for opt in [
                OptimizerKind::Adam,
                OptimizerKind::Nag,
                OptimizerKind::Momentum,
            ] {
                let mut c = config(cell, opt);
                c.hyper.lr = 0.0;
                let initial = Model::init(cell, 1, c.hidden, &mut Rng::new(c.seed));
                let r = fit(&c, &train, &val).unwrap();
                assert_eq!(
                    crate::cells::write_snapshot(&r.model),
                    crate::cells::write_snapshot(&initial)
                );
                let first = r.records[0].train_loss;
                assert!(r
                    .records
                    .iter()
                    .all(|e| (e.train_loss - first).abs() <= 1e-15));
                assert_eq!(evaluate(&r.model, &train).unwrap(), first);
            }
        }
    }

    #[test]
    fn gradient_evaluations_per_sample() {
        let (train, val) = small_data();
        for (opt, per_sample) in [
            (OptimizerKind::Adam, 1),
            (OptimizerKind::Momentum, 1),
            (OptimizerKind::Nag, 2),
        ] {
            let r = fit(&config(CellKind::Lstm, opt), &train, &val).unwrap();
            assert_eq!(r.grad_evals, per_sample * 3 * train.len() as u64, "{opt}");
        }
    }

    #[test]
    fn same_seed_same_records_and_parameters() {
        let (train, val) = small_data();
        let c = config(CellKind::Gru, OptimizerKind::Nag);
        let a = fit(&c, &train, &val).unwrap();
        let b = fit(&c, &train, &val).unwrap();
        let losses = |r: &RunResult| {
            r.records
                .iter()
                .map(|e| (e.train_loss.to_bits(), e.val_loss.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(losses(&a), losses(&b));
        assert_eq!(a.model, b.model);
        let other = fit(&TrainConfig { seed: 2, ..c }, &train, &val).unwrap();
        assert_ne!(losses(&a), losses(&other));
    }

    #[test]
    fn shuffle_is_seeded() {
        let (train, val) = small_data();
        let c = TrainConfig {
            shuffle: true,
            ..config(CellKind::Lstm, OptimizerKind::Adam)
        };
        let a = fit(&c, &train, &val).unwrap();
        assert_eq!(a.model, fit(&c, &train, &val).unwrap().model);
        assert_ne!(
            a.model,
            fit(&config(CellKind::Lstm, OptimizerKind::Adam), &train, &val)
                .unwrap()
                .model
        );
    }

    // Adam's first moment overshoots on a lone sample, so the curve is not
    // monotone near the optimum; only the level reached is asserted.
    #[test]
    fn memorizes_a_single_sample() {
        let one = make_windows(&[0.2, 0.5, 0.3, 0.8], 3).unwrap();
        assert_eq!(one.len(), 1);
        for cell in CellKind::ALL {
            let mut c = TrainConfig {
                epochs: 100,
                hidden: 16,
                ..config(cell, OptimizerKind::Adam)
            };
            c.hyper.lr = 0.005;
            let r = fit(&c, &one, &one).unwrap();
            let losses: Vec<f64> = r.records.iter().map(|e| e.train_loss).collect();
            assert!(losses.iter().any(|&l| l < 1e-6), "{cell}: {losses:?}");
            assert!(losses[99] < 1e-4 * losses[0], "{cell}: {losses:?}");
            assert!(
                losses[..20].windows(2).all(|w| w[1] < w[0]),
                "{cell}: {losses:?}"
            );
        }
    }

    #[test]
    fn epoch_count_and_progress_lines() {
        let (train, val) = small_data();
        let c = TrainConfig {
            epochs: 10,
            ..config(CellKind::Gru, OptimizerKind::Adam)
        };
        let mut log = Vec::new();
        let r = fit_with_progress(&c, &train, &val, Some(&mut log)).unwrap();
        assert_eq!(r.records.len(), 10);
        assert!(r.records.iter().enumerate().all(|(i, e)| e.epoch == i + 1));
        let text = String::from_utf8(log).unwrap();
        assert_eq!(text.lines().count(), 10);
        let fields: Vec<&str> = text.lines().next().unwrap().split('\t').collect();
        assert_eq!(fields[0], "GRU Adam");
        assert_eq!(fields[1], "1");
        assert_eq!(fields[2].parse::<f64>().unwrap(), r.records[0].train_loss);
    }

    #[test]
    fn non_finite_loss_names_epoch_and_sample() {
        let mut data = make_windows(&[0.1, 0.2, 0.3, 0.4, 0.5], 2).unwrap();
        data.samples[2].target = f64::NAN;
        let mut model = Model::zeros(CellKind::Lstm, 1, 2);
        let mut opt = Optimizer::new(OptimizerKind::Adam, &Hyperparams::default()).unwrap();
        let err = train_epoch(
            &mut model,
            &mut opt,
            &data,
            &EpochOptions {
                epoch: 4,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                Error::NonFiniteLoss {
                    epoch: 4,
                    sample: 2
                }
            ),
            "{err}"
        );
    }
}
