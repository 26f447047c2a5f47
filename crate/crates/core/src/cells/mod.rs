//! Recurrent forecasters: LSTM and GRU cells, a scalar linear head, and exact
//! backpropagation through time over one lookback window.
//!
//! Conventions shared by both cells:
//!
//! * every gate multiplies the concatenation `[h_{t-1}, x_t]`, hidden part first;
//! * the initial state is all zeros for every window;
//! * the prediction is `W_out · h_T + b_out`;
//! * gradients cover the full window (no truncation).
//!
//! Parameter blocks are always enumerated in declaration order, cell first, then
//! head. That order is what optimizers iterate and what snapshots store.

mod gradcheck;
mod gru;
mod lstm;
mod snapshot;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gradcheck::{check_against, gradient_check, relative_error, BlockCheck, GradCheckReport};
pub use gru::{gru_step, GruCache, GruParams, GruState};
pub use lstm::{lstm_step, LstmCache, LstmParams, LstmState};
pub use snapshot::{read_snapshot, write_snapshot};

use crate::error::{Error, Result};
use crate::linalg::{init_uniform, Matrix, Rng, Vector};
use crate::optim::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub const ALL: [CellKind; 2] = [CellKind::Lstm, CellKind::Gru];

    /// Upper-case display name used in report rows.
    pub fn label(self) -> &'static str {
        match self {
            CellKind::Lstm => "LSTM",
            CellKind::Gru => "GRU",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        })
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            _ => Err(Error::UnknownCell {
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellParams {
    Lstm(LstmParams),
    Gru(GruParams),
}

impl CellParams {
    pub fn kind(&self) -> CellKind {
        match self {
            CellParams::Lstm(_) => CellKind::Lstm,
            CellParams::Gru(_) => CellKind::Gru,
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            CellParams::Lstm(p) => p.hidden(),
            CellParams::Gru(p) => p.hidden(),
        }
    }

    pub fn input(&self) -> usize {
        match self {
            CellParams::Lstm(p) => p.input(),
            CellParams::Gru(p) => p.input(),
        }
    }

    fn zeros(kind: CellKind, input: usize, hidden: usize) -> Self {
        match kind {
            CellKind::Lstm => CellParams::Lstm(LstmParams::zeros(input, hidden)),
            CellKind::Gru => CellParams::Gru(GruParams::zeros(input, hidden)),
        }
    }

    fn matrices(&self) -> Vec<(&'static str, &Matrix)> {
        match self {
            CellParams::Lstm(p) => p.named_weights(),
            CellParams::Gru(p) => p.named_weights(),
        }
    }

    fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            CellParams::Lstm(p) => p.weights_mut(),
            CellParams::Gru(p) => p.weights_mut(),
        }
    }

    fn vectors(&self) -> Vec<(&'static str, &Vector)> {
        match self {
            CellParams::Lstm(p) => p.named_biases(),
            CellParams::Gru(p) => p.named_biases(),
        }
    }
}

/// Linear readout from the last hidden state to one scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub w_out: Matrix,
    pub b_out: Vector,
}

impl DenseParams {
    pub fn zeros(hidden: usize) -> Self {
        DenseParams {
            w_out: Matrix::zeros(1, hidden),
            b_out: Vector::zeros(1),
        }
    }

    pub fn apply(&self, h: &Vector) -> Result<f64> {
        Ok(self.w_out.matvec(h)?[0] + self.b_out[0])
    }
}

/// A complete forecaster: one recurrent layer plus the scalar head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub cell: CellParams,
    pub head: DenseParams,
}

impl Model {
    pub fn zeros(kind: CellKind, input: usize, hidden: usize) -> Self {
        Model {
            cell: CellParams::zeros(kind, input, hidden),
            head: DenseParams::zeros(hidden),
        }
    }

    /// Cell weights uniform in `±1/√(hidden + input)`, head weights uniform in
    /// `±1/√hidden`, every bias zero. Matrices are drawn in block order.
    pub fn init(kind: CellKind, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut model = Model::zeros(kind, input, hidden);
        let cell_scale = 1.0 / ((hidden + input) as f64).sqrt();
        for w in model.cell.matrices_mut() {
            *w = init_uniform(rng, w.rows(), w.cols(), cell_scale);
        }
        model.head.w_out = init_uniform(rng, 1, hidden, 1.0 / (hidden as f64).sqrt());
        model
    }

    pub fn kind(&self) -> CellKind {
        self.cell.kind()
    }

    pub fn hidden(&self) -> usize {
        self.cell.hidden()
    }

    pub fn input(&self) -> usize {
        self.cell.input()
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// Named matrices in block order; biases are 1-row matrices here.
    pub fn named_blocks(&self) -> Vec<(&'static str, usize, usize, &[f64])> {
        let mut out: Vec<(&'static str, usize, usize, &[f64])> = Vec::new();
        for (name, m) in self.cell.matrices() {
            out.push((name, m.rows(), m.cols(), m.as_slice()));
        }
        for (name, v) in self.cell.vectors() {
            out.push((name, 1, v.len(), v.as_slice()));
        }
        out.push(("W_out", 1, self.hidden(), self.head.w_out.as_slice()));
        out.push(("b_out", 1, 1, self.head.b_out.as_slice()));
        out
    }
}

impl ParamSet for Model {
    fn block_names(&self) -> Vec<&'static str> {
        self.named_blocks().into_iter().map(|b| b.0).collect()
    }

    fn blocks(&self) -> Vec<&[f64]> {
        self.named_blocks().into_iter().map(|b| b.3).collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let Model { cell, head } = self;
        let mut out: Vec<&mut [f64]> = Vec::new();
        // Borrow matrices and biases through separate match arms so both are live.
        match cell {
            CellParams::Lstm(p) => {
                let LstmParams {
                    w_i,
                    w_f,
                    w_o,
                    w_c,
                    b_i,
                    b_f,
                    b_o,
                    b_c,
                } = p;
                for m in [w_i, w_f, w_o, w_c] {
                    out.push(m.as_mut_slice());
                }
                for v in [b_i, b_f, b_o, b_c] {
                    out.push(v.as_mut_slice());
                }
            }
            CellParams::Gru(p) => {
                let GruParams {
                    w_z,
                    w_r,
                    w_h,
                    b_z,
                    b_r,
                    b_h,
                } = p;
                for m in [w_z, w_r, w_h] {
                    out.push(m.as_mut_slice());
                }
                for v in [b_z, b_r, b_h] {
                    out.push(v.as_mut_slice());
                }
            }
        }
        out.push(head.w_out.as_mut_slice());
        out.push(head.b_out.as_mut_slice());
        out
    }
}

/// Parameter gradients, shape-congruent with [`Model`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Model);

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Gradients(Model::zeros(model.kind(), model.input(), model.hidden()))
    }

    pub fn scale(&mut self, k: f64) {
        for b in self.0.blocks_mut() {
            for x in b {
                *x *= k;
            }
        }
    }
}

impl ParamSet for Gradients {
    fn block_names(&self) -> Vec<&'static str> {
        self.0.block_names()
    }

    fn blocks(&self) -> Vec<&[f64]> {
        self.0.blocks()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.0.blocks_mut()
    }
}

/// Per-timestep records from one forward pass.
#[derive(Debug, Clone)]
pub enum StepCaches {
    Lstm(Vec<LstmCache>),
    Gru(Vec<GruCache>),
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub steps: StepCaches,
    /// Final hidden state `h_T`, the head's input.
    pub h_last: Vector,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        match &self.steps {
            StepCaches::Lstm(s) => s.len(),
            StepCaches::Gru(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Unroll the cell over `window` from a zero state and apply the head.
pub fn forward_sequence(model: &Model, window: &[Vector]) -> Result<(f64, ForwardCache)> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let hidden = model.hidden();
    let (steps, h_last) = match &model.cell {
        CellParams::Lstm(p) => {
            let mut state = LstmState::zeros(hidden);
            let mut caches = Vec::with_capacity(window.len());
            for x in window {
                let (next, cache) = lstm_step(p, &state, x)?;
                caches.push(cache);
                state = next;
            }
            (StepCaches::Lstm(caches), state.h)
        }
        CellParams::Gru(p) => {
            let mut state = GruState::zeros(hidden);
            let mut caches = Vec::with_capacity(window.len());
            for x in window {
                let (next, cache) = gru_step(p, &state, x)?;
                caches.push(cache);
                state = next;
            }
            (StepCaches::Gru(caches), state.h)
        }
    };
    let prediction = model.head.apply(&h_last)?;
    Ok((prediction, ForwardCache { steps, h_last }))
}

/// Forward pass without keeping the caches.
pub fn predict(model: &Model, window: &[Vector]) -> Result<f64> {
    forward_sequence(model, window).map(|(p, _)| p)
}

/// Reverse-mode pass: gradients of a scalar objective whose derivative with
/// respect to the prediction is `d_prediction`.
pub fn backward_sequence(
    model: &Model,
    cache: &ForwardCache,
    d_prediction: f64,
) -> Result<Gradients> {
    let hidden = model.hidden();
    if cache.h_last.len() != hidden {
        return Err(Error::Shape {
            op: "backward_sequence",
            left: format!("model hidden {hidden}"),
            right: format!("cache hidden {}", cache.h_last.len()),
        });
    }
    let mut grads = Gradients::zeros_like(model);
    {
        let head = &mut grads.0.head;
        head.w_out
            .add_outer(&[d_prediction], cache.h_last.as_slice());
        head.b_out[0] = d_prediction;
    }
    let mut dh = vec![0.0; hidden];
    model
        .head
        .w_out
        .add_transposed_matvec(&[d_prediction], &mut dh);

    match (&model.cell, &cache.steps, &mut grads.0.cell) {
        (CellParams::Lstm(p), StepCaches::Lstm(steps), CellParams::Lstm(g)) => {
            lstm::backward(p, steps, dh, g);
        }
        (CellParams::Gru(p), StepCaches::Gru(steps), CellParams::Gru(g)) => {
            gru::backward(p, steps, dh, g);
        }
        _ => {
            return Err(Error::Shape {
                op: "backward_sequence",
                left: format!("{} model", model.kind()),
                right: "cache from a different cell type".into(),
            })
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(xs: &[f64]) -> Vec<Vector> {
        xs.iter().map(|&x| Vector::from(vec![x])).collect()
    }

    #[test]
    fn single_step_zero_params_predicts_bias() {
        for kind in CellKind::ALL {
            let mut m = Model::zeros(kind, 1, 3);
            m.head.b_out[0] = 0.37;
            let (p, cache) = forward_sequence(&m, &window(&[0.9])).unwrap();
            assert_eq!(p, 0.37);
            assert_eq!(cache.len(), 1);
        }
    }

    #[test]
    fn closed_update_gate_keeps_initial_state() {
        let mut m = Model::zeros(CellKind::Gru, 1, 4);
        let CellParams::Gru(p) = &mut m.cell else {
            unreachable!()
        };
        p.b_z = Vector::filled(4, -1e3);
        m.head.w_out = Matrix::from_vec(1, 4, vec![0.3, -0.2, 0.5, 1.0]).unwrap();
        m.head.b_out[0] = 0.1;
        let (pred, _) = forward_sequence(&m, &window(&[0.4; 6])).unwrap();
        let h0 = Vector::zeros(4);
        assert_eq!(pred, m.head.apply(&h0).unwrap());
    }

    #[test]
    fn forward_is_pure() {
        let m = Model::init(CellKind::Lstm, 1, 5, &mut Rng::new(9));
        let w = window(&[0.1, 0.5, -0.3]);
        assert_eq!(
            predict(&m, &w).unwrap().to_bits(),
            predict(&m, &w).unwrap().to_bits()
        );
    }

    #[test]
    fn empty_window_is_rejected() {
        let m = Model::zeros(CellKind::Gru, 1, 2);
        assert!(matches!(forward_sequence(&m, &[]), Err(Error::EmptyWindow)));
    }

    #[test]
    fn zero_adjoint_gives_zero_gradients() {
        for kind in CellKind::ALL {
            let m = Model::init(kind, 1, 6, &mut Rng::new(1));
            let (_, cache) = forward_sequence(&m, &window(&[0.2, 0.7, 0.1])).unwrap();
            let g = backward_sequence(&m, &cache, 0.0).unwrap();
            assert!(g.blocks().iter().all(|b| b.iter().all(|&x| x == 0.0)));
        }
    }

    #[test]
    fn gradients_are_linear_in_adjoint() {
        for kind in CellKind::ALL {
            let m = Model::init(kind, 1, 6, &mut Rng::new(2));
            let (_, cache) = forward_sequence(&m, &window(&[0.2, -0.7, 0.1, 0.4])).unwrap();
            let g1 = backward_sequence(&m, &cache, 0.8).unwrap();
            let g2 = backward_sequence(&m, &cache, 1.6).unwrap();
            for (a, b) in g1.blocks().iter().zip(g2.blocks()) {
                for (x, y) in a.iter().zip(b) {
                    assert!((2.0 * x - y).abs() <= 1e-12, "{x} {y}");
                }
            }
        }
    }

    #[test]
    fn cache_from_other_cell_is_rejected() {
        let lstm = Model::init(CellKind::Lstm, 1, 3, &mut Rng::new(1));
        let gru = Model::init(CellKind::Gru, 1, 3, &mut Rng::new(1));
        let (_, cache) = forward_sequence(&gru, &window(&[0.5])).unwrap();
        assert!(backward_sequence(&lstm, &cache, 1.0).is_err());
    }

    #[test]
    fn block_order_is_declaration_order() {
        let m = Model::zeros(CellKind::Lstm, 1, 2);
        assert_eq!(
            m.block_names(),
            ["W_i", "W_f", "W_o", "W_c", "b_i", "b_f", "b_o", "b_c", "W_out", "b_out"]
        );
        let g = Model::zeros(CellKind::Gru, 1, 2);
        assert_eq!(
            g.block_names(),
            ["W_z", "W_r", "W", "b_z", "b_r", "b", "W_out", "b_out"]
        );
        assert_eq!(m.num_params(), 4 * 2 * 3 + 4 * 2 + 2 + 1);
    }

    #[test]
    fn init_respects_scales_and_zero_biases() {
        let m = Model::init(CellKind::Gru, 1, 8, &mut Rng::new(5));
        let bound = 1.0 / 3.0;
        for (name, _, _, data) in m.named_blocks() {
            if name.starts_with('b') {
                assert!(data.iter().all(|&x| x == 0.0), "{name}");
            } else if name != "W_out" {
                assert!(data.iter().all(|x| x.abs() <= bound), "{name}");
            }
        }
    }
}
