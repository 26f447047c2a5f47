//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! asserted criterion fails.
//!
//! Golden files for the protocol check live in `tests/golden/`. Regenerate
//! them with `SEQOPT_BLESS=1 cargo test -p seqopt --test acceptance` and
//! review the diff.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use seqopt::cells::{gradient_check, CellKind, Model};
use seqopt::cli::BUNDLED_SINE_TREND;
use seqopt::data::{make_windows, PrepareConfig, PreparedData, SplitSpec};
use seqopt::eval::BenchmarkReport;
use seqopt::linalg::{Rng, Vector};
use seqopt::optim::{AdamState, MomentumState, NagState, OptimizerKind, ParamSet};
use seqopt::train::{fit, TrainConfig};

const SINE_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/sine_trend.csv");
const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/sine_benchmark");

/// Pass/fail with a one-line detail.
type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

fn criterion_1_gradients() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut rng = Rng::new(0x5eed);
    for cell in CellKind::ALL {
        for instance in 0..50 {
            let hidden = 1 + rng.below(8);
            let window = 1 + rng.below(5);
            let mut model = Model::init(cell, 1, hidden, &mut rng);
            for b in model.blocks_mut() {
                for x in b {
                    *x += rng.uniform(0.5);
                }
            }
            let xs: Vec<Vector> = (0..window)
                .map(|_| Vector::from(vec![rng.uniform(1.0)]))
                .collect();
            let report = gradient_check(&model, &xs, 1e-5).map_err(|e| e.to_string())?;
            worst = worst.max(report.max_rel_error());
            ensure!(
                report.passed(),
                "{cell} instance {instance} (hidden {hidden}, window {window}): max rel error {:e}",
                report.max_rel_error()
            );
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!(
        "100 instances, worst rel error {worst:.2e} <= 1e-5, {secs:.2} s"
    ))
}

fn criterion_2_optimizers() -> Outcome {
    // (a) Adam bias correction with a constant gradient.
    let g = 0.37;
    let mut adam = AdamState::new(0.001, 0.9, 0.999, 1e-8);
    let mut theta = vec![0.0];
    let mut worst = 0.0f64;
    for _ in 1..=100 {
        adam.step(&mut theta, &vec![g]).map_err(|e| e.to_string())?;
        let (m_hat, v_hat) = adam.bias_corrected();
        worst = worst
            .max((m_hat[0][0] - g).abs())
            .max((v_hat[0][0] - g * g).abs());
    }
    ensure!(
        worst <= 1e-12,
        "Adam bias-corrected moments off by {worst:e}"
    );

    // (b) NAG on J = θ²/2.
    let mut nag = NagState::new(0.1, 0.9);
    let mut theta = vec![1.0];
    let mut trajectory = Vec::new();
    for _ in 0..2 {
        nag.step(&mut theta, |p: &Vec<f64>| Ok(p.clone()))
            .map_err(|e| e.to_string())?;
        trajectory.push(theta[0]);
    }
    ensure!(
        (trajectory[0] - 0.9).abs() <= 1e-15 && (trajectory[1] - 0.729).abs() <= 1e-15,
        "NAG trajectory {trajectory:?}"
    );

    // (c) β = 0 is plain SGD, bit for bit.
    let mut rng = Rng::new(7);
    let lr = 0.05;
    let mut sgd: Vec<f64> = (0..6).map(|_| rng.uniform(2.0)).collect();
    let (mut mom_theta, mut nag_theta) = (sgd.clone(), sgd.clone());
    let mut mom = MomentumState::new(lr, 0.0);
    let mut nag0 = NagState::new(lr, 0.0);
    for _ in 0..200 {
        let grad: Vec<f64> = (0..6).map(|_| rng.uniform(3.0)).collect();
        for (p, g) in sgd.iter_mut().zip(&grad) {
            *p -= lr * g;
        }
        mom.step(&mut mom_theta, &grad).map_err(|e| e.to_string())?;
        nag0.step(&mut nag_theta, |_: &Vec<f64>| Ok(grad.clone()))
            .map_err(|e| e.to_string())?;
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure!(
            bits(&mom_theta) == bits(&sgd),
            "momentum beta=0 diverged from SGD"
        );
        ensure!(
            bits(&nag_theta) == bits(&sgd),
            "NAG beta=0 diverged from SGD"
        );
    }
    Ok(format!(
        "Adam moments within {worst:.1e}; NAG 0.9 -> 0.729; beta=0 bit-identical over 200 steps"
    ))
}

fn criterion_3_pipeline() -> Outcome {
    let mut rng = Rng::new(3);
    let config = PrepareConfig {
        lookback: 20,
        ..PrepareConfig::default()
    };
    let prepared =
        PreparedData::from_csv(BUNDLED_SINE_TREND.as_bytes(), config).map_err(|e| e.to_string())?;
    let s = prepared.scaler;
    let worst = (0..1000)
        .map(|_| {
            let x = s.min_x + (rng.next_f64() * 1.4 - 0.2) * s.range();
            (s.inverse_transform(s.transform(x)) - x).abs()
        })
        .fold(0.0, f64::max);
    ensure!(worst <= 1e-12, "round-trip error {worst:e}");

    // Leakage: replacing every held-out price leaves the scaler and the train windows alone.
    let mut series = seqopt::data::synthetic_sine_trend(500);
    let base = PreparedData::from_series(&series, 0, config).map_err(|e| e.to_string())?;
    let n_train = base.partitions.train.len();
    for x in &mut series.close[n_train..] {
        *x *= 3.0;
    }
    let altered = PreparedData::from_series(&series, 0, config).map_err(|e| e.to_string())?;
    ensure!(
        altered.scaler == base.scaler,
        "scaler moved when only held-out prices changed"
    );
    let (a, b) = (
        base.datasets().map_err(|e| e.to_string())?,
        altered.datasets().map_err(|e| e.to_string())?,
    );
    ensure!(a.train == b.train, "train windows changed");

    // Window counts are length - L per partition, for several settings.
    for (lookback, split) in [
        (20, SplitSpec::default()),
        (5, SplitSpec::new(0.8, 0.1, 0.1).unwrap()),
        (60, SplitSpec::default()),
    ] {
        let config = PrepareConfig {
            lookback,
            split,
            ..PrepareConfig::default()
        };
        let p = PreparedData::from_csv(BUNDLED_SINE_TREND.as_bytes(), config)
            .map_err(|e| e.to_string())?;
        let d = p.datasets().map_err(|e| e.to_string())?;
        let parts = &p.partitions;
        for (name, windows, len) in [
            ("train", d.train.len(), parts.train.len()),
            ("val", d.val.len(), parts.val.len()),
            ("test", d.test.len(), parts.test.len()),
        ] {
            ensure!(
                windows == len - lookback,
                "{name}: {windows} windows from {len} rows at L={lookback}"
            );
        }
    }
    ensure!(
        make_windows(&[1.0, 2.0, 3.0, 4.0, 5.0], 3)
            .map(|w| w.len())
            .ok()
            == Some(2),
        "length 5, L=3"
    );
    Ok(format!(
        "round-trip {worst:.1e}; train-only scaler unaffected by held-out data; counts = len - L"
    ))
}

fn criterion_4_desk_scale() -> Outcome {
    let config = PrepareConfig {
        lookback: 20,
        ..PrepareConfig::default()
    };
    let prepared =
        PreparedData::from_csv(BUNDLED_SINE_TREND.as_bytes(), config).map_err(|e| e.to_string())?;
    let data = prepared.datasets().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let mut summary = Vec::new();
    for (cell, optimizer) in seqopt::cli::MATRIX {
        let c = TrainConfig {
            cell,
            optimizer,
            epochs: 10,
            hidden: 16,
            lookback: 20,
            ..TrainConfig::default()
        };
        let run = fit(&c, &data.train, &data.val).map_err(|e| e.to_string())?;
        let again = fit(&c, &data.train, &data.val).map_err(|e| e.to_string())?;
        ensure!(
            run.records.len() == 10,
            "{}: {} epochs",
            c.label(),
            run.records.len()
        );
        let bits = |r: &seqopt::train::RunResult| {
            r.records
                .iter()
                .map(|e| (e.train_loss.to_bits(), e.val_loss.to_bits()))
                .collect::<Vec<_>>()
        };
        ensure!(
            bits(&run) == bits(&again) && run.model == again.model,
            "{} not deterministic",
            c.label()
        );
        let last = run.final_record().train_loss;
        ensure!(last < 1e-2, "{} final train MSE {last:e}", c.label());
        summary.push(format!("{} {last:.2e}", c.label()));
    }
    // Each configuration was trained twice; the budget is for one pass of four.
    let secs = started.elapsed().as_secs_f64() / 2.0;
    ensure!(secs < 120.0, "four runs took {secs:.1} s");
    Ok(format!("{}; {secs:.1} s for four runs", summary.join(", ")))
}

fn run_benchmark(out: &Path, extra: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_seqopt"))
        .args([
            "benchmark",
            "--data",
            SINE_PATH,
            "--lookback",
            "20",
            "--hidden",
            "16",
            "--out",
        ])
        .arg(out)
        .args(extra)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!(
            "benchmark exited {:?}: {}",
            o.status.code(),
            String::from_utf8_lossy(&o.stderr)
        ));
    }
    Ok(())
}

const ARTIFACTS: [&str; 3] = ["report.csv", "curves.csv", "report.json"];

fn criterion_6_protocol(scratch: &Path) -> Outcome {
    let out = scratch.join("protocol");
    run_benchmark(&out, &[])?;
    let read =
        |p: PathBuf| std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()));
    let report: BenchmarkReport =
        serde_json::from_str(&read(out.join("report.json"))?).map_err(|e| e.to_string())?;
    let p = &report.protocol;
    ensure!(
        p.batch_size == 1 && p.lr == 0.001 && p.epochs == 10,
        "protocol {p:?}"
    );
    let configs: Vec<&str> = report.rows.iter().map(|r| r.config.as_str()).collect();
    ensure!(
        configs == ["LSTM Adam", "LSTM NAG", "GRU Adam", "GRU NAG"],
        "rows {configs:?}"
    );
    let pairs: Vec<(CellKind, OptimizerKind)> =
        report.rows.iter().map(|r| (r.cell, r.optimizer)).collect();
    ensure!(pairs == seqopt::cli::MATRIX, "matrix {pairs:?}");
    ensure!(
        report.curves.iter().all(|c| c.points.len() == 10),
        "curves are not 10 epochs long"
    );

    let golden = Path::new(GOLDEN);
    if std::env::var_os("SEQOPT_BLESS").is_some() {
        std::fs::create_dir_all(golden).map_err(|e| e.to_string())?;
        for f in ARTIFACTS {
            std::fs::copy(out.join(f), golden.join(f)).map_err(|e| e.to_string())?;
        }
    }
    for f in ARTIFACTS {
        ensure!(
            read(out.join(f))? == read(golden.join(f))?,
            "{f} differs from golden file"
        );
    }
    Ok(
        "2x2 matrix, batch 1, lr 0.001, 10 epochs, reference row order; matches golden files"
            .into(),
    )
}

fn criterion_7_determinism(scratch: &Path) -> Outcome {
    let (a, b) = (scratch.join("run_a"), scratch.join("run_b"));
    run_benchmark(&a, &["--epochs", "3", "--seeds", "1,2"])?;
    run_benchmark(&b, &["--epochs", "3", "--seeds", "1,2"])?;
    for f in ARTIFACTS {
        let x = std::fs::read(a.join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(f)).map_err(|e| e.to_string())?;
        ensure!(x == y, "{f} differs between invocations");
    }
    Ok(
        "two benchmark invocations produced byte-identical report.csv, curves.csv, report.json"
            .into(),
    )
}

fn main() {
    let scratch = std::env::temp_dir().join(format!("seqopt-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&scratch).expect("scratch dir");

    let criteria: Vec<Criterion> = vec![
        ("1 gradient correctness", Box::new(criterion_1_gradients)),
        ("2 optimizer exactness", Box::new(criterion_2_optimizers)),
        (
            "3 scaler/pipeline properties",
            Box::new(criterion_3_pipeline),
        ),
        ("4 desk-scale end-to-end", Box::new(criterion_4_desk_scale)),
        (
            "6 protocol fidelity",
            Box::new(|| criterion_6_protocol(&scratch)),
        ),
        (
            "7 determinism",
            Box::new(|| criterion_7_determinism(&scratch)),
        ),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail}");
            }
        }
        if name.starts_with('4') {
            println!(
                "SOFT  criterion 5 published-number reproduction: not asserted; \
                 multi-seed comparison on the bundled sample is reported in README.md"
            );
        }
    }
    let _ = std::fs::remove_dir_all(&scratch);
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
