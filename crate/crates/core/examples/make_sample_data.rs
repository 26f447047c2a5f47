//! Regenerates the CSV files under `data/`.
//!
//! ```text
//! cargo run -p seqopt --example make_sample_data
//! ```

use std::path::Path;

use seqopt::data::{synthetic_gbm, synthetic_sine_trend};

/// Rows blanked out in the GBM sample to exercise gap repair.
const GAPS: [usize; 3] = [137, 1024, 2201];

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");

    std::fs::write(
        dir.join("sine_trend.csv"),
        synthetic_sine_trend(500).to_csv(),
    )?;

    let gbm = synthetic_gbm(2665, 19.75, 0.00101, 0.018, 2014);
    let mut lines: Vec<String> = gbm.to_csv().lines().map(str::to_owned).collect();
    for i in GAPS {
        let date = gbm.dates[i];
        lines[i + 1] = format!("{date},null,null,null,null,null,null");
    }
    std::fs::write(dir.join("synthetic_prices.csv"), lines.join("\n") + "\n")?;
    Ok(())
}
