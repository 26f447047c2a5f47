//! Central-difference verification of [`backward_sequence`].
//!
//! The objective is the prediction itself, so the analytic side is
//! `backward_sequence(model, cache, 1.0)`.

use serde::Serialize;

use super::{backward_sequence, forward_sequence, predict, Gradients, Model};
use crate::error::Result;
use crate::linalg::Vector;
use crate::optim::ParamSet;

pub const FD_STEP: f64 = 1e-6;

/// Denominator floor for [`relative_error`]. Central differences with a 1e-6
/// step carry roughly 1e-10 of absolute noise, so smaller gradients are
/// compared absolutely against this scale.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockCheck {
    pub name: &'static str,
    pub max_rel_error: f64,
    /// Flat row-major index of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().fold(0.0, |m, b| m.max(b.max_rel_error))
    }

    pub fn failures(&self) -> impl Iterator<Item = &BlockCheck> {
        self.blocks.iter().filter(|b| !b.passed)
    }
}

pub fn gradient_check(model: &Model, window: &[Vector], tolerance: f64) -> Result<GradCheckReport> {
    let (_, cache) = forward_sequence(model, window)?;
    let analytic = backward_sequence(model, &cache, 1.0)?;
    check_against(model, window, &analytic, tolerance)
}

/// Compare arbitrary `analytic` gradients against central differences.
pub fn check_against(
    model: &Model,
    window: &[Vector],
    analytic: &Gradients,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let names = model.block_names();
    let analytic_blocks = analytic.blocks();
    let mut probe = model.clone();
    let mut blocks = Vec::with_capacity(names.len());

    for (b, name) in names.iter().enumerate() {
        let mut worst = (0.0, 0, 0.0, 0.0);
        for (j, &a) in analytic_blocks[b].iter().enumerate() {
            let original = probe.blocks()[b][j];
            probe.blocks_mut()[b][j] = original + FD_STEP;
            let plus = predict(&probe, window)?;
            probe.blocks_mut()[b][j] = original - FD_STEP;
            let minus = predict(&probe, window)?;
            probe.blocks_mut()[b][j] = original;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let err = relative_error(a, numeric);
            if err > worst.0 || j == 0 {
                worst = (err, j, a, numeric);
            }
        }
        blocks.push(BlockCheck {
            name,
            max_rel_error: worst.0,
            worst_index: worst.1,
            analytic: worst.2,
            numeric: worst.3,
            passed: worst.0 <= tolerance,
        });
    }
    Ok(GradCheckReport { tolerance, blocks })
}
