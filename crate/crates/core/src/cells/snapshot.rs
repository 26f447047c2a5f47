//! Plain-text parameter dumps.
//!
//! ```text
//! seqopt-snapshot 1
//! cell gru
//! input 1
//! hidden 2
//! block W_z 2 3
//! <row 0, space separated>
//! <row 1>
//! block W_r 2 3
//! ...
//! ```
//!
//! Blocks follow the model's block order, values are row-major with 17
//! significant digits, so a dump reloads bit-exactly.

use std::fmt::Write as _;

use super::{CellKind, Model};
use crate::error::{Error, Result};
use crate::optim::ParamSet;

const MAGIC: &str = "seqopt-snapshot 1";

pub fn write_snapshot(model: &Model) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "cell {}", model.kind());
    let _ = writeln!(out, "input {}", model.input());
    let _ = writeln!(out, "hidden {}", model.hidden());
    for (name, rows, cols, data) in model.named_blocks() {
        let _ = writeln!(out, "block {name} {rows} {cols}");
        for row in data.chunks(cols.max(1)) {
            let line: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out
}

pub fn read_snapshot(text: &str) -> Result<Model> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| Error::Snapshot {
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })
    };
    let bad = |line: usize, msg: String| Error::Snapshot { line, msg };

    let (n, magic) = next("header")?;
    if magic != MAGIC {
        return Err(bad(n, format!("expected `{MAGIC}`")));
    }
    let mut header = |key: &str| -> Result<(usize, String)> {
        let (n, l) = next(key)?;
        let value = l
            .strip_prefix(key)
            .map(str::trim)
            .ok_or_else(|| bad(n, format!("expected `{key} <value>`")))?;
        Ok((n, value.to_string()))
    };
    let (n, cell) = header("cell")?;
    let kind: CellKind = cell.parse().map_err(|e: Error| bad(n, e.to_string()))?;
    let (n, input) = header("input")?;
    let input: usize = input.parse().map_err(|_| bad(n, "bad input size".into()))?;
    let (n, hidden) = header("hidden")?;
    let hidden: usize = hidden
        .parse()
        .map_err(|_| bad(n, "bad hidden size".into()))?;

    let mut model = Model::zeros(kind, input, hidden);
    let names = model.block_names();
    let lens: Vec<usize> = model.blocks().iter().map(|b| b.len()).collect();
    for (b, block) in model.blocks_mut().into_iter().enumerate() {
        let (n, l) = next("block header")?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        match parts.as_slice() {
            ["block", name, rows, cols] if *name == names[b] => {
                let rows: usize = rows.parse().map_err(|_| bad(n, "bad row count".into()))?;
                let cols: usize = cols
                    .parse()
                    .map_err(|_| bad(n, "bad column count".into()))?;
                if rows * cols != lens[b] {
                    return Err(bad(
                        n,
                        format!(
                            "block {name} is {rows}x{cols}, model needs {} values",
                            lens[b]
                        ),
                    ));
                }
                let mut filled = 0;
                for _ in 0..rows {
                    let (n, l) = next("row")?;
                    let values = l
                        .split_whitespace()
                        .map(str::parse::<f64>)
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| bad(n, format!("bad value: {e}")))?;
                    if values.len() != cols {
                        return Err(bad(
                            n,
                            format!("expected {cols} values, got {}", values.len()),
                        ));
                    }
                    block[filled..filled + cols].copy_from_slice(&values);
                    filled += cols;
                }
            }
            _ => {
                return Err(bad(
                    n,
                    format!("expected `block {} <rows> <cols>`", names[b]),
                ))
            }
        }
    }
    Ok(model)
}
