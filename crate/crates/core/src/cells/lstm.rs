use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sigmoid, tanh_v, Matrix, Vector};

/// Gate weights act on `[h_{t-1}, x_t]`, so each is `hidden × (hidden + input)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_i: Matrix,
    pub w_f: Matrix,
    pub w_o: Matrix,
    pub w_c: Matrix,
    pub b_i: Vector,
    pub b_f: Vector,
    pub b_o: Vector,
    pub b_c: Vector,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = Matrix::zeros(hidden, hidden + input);
        let b = Vector::zeros(hidden);
        LstmParams {
            w_i: w.clone(),
            w_f: w.clone(),
            w_o: w.clone(),
            w_c: w,
            b_i: b.clone(),
            b_f: b.clone(),
            b_o: b.clone(),
            b_c: b,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_i.rows()
    }

    pub fn input(&self) -> usize {
        self.w_i.cols() - self.w_i.rows()
    }

    pub(super) fn named_weights(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("W_i", &self.w_i),
            ("W_f", &self.w_f),
            ("W_o", &self.w_o),
            ("W_c", &self.w_c),
        ]
    }

    pub(super) fn named_biases(&self) -> Vec<(&'static str, &Vector)> {
        vec![
            ("b_i", &self.b_i),
            ("b_f", &self.b_f),
            ("b_o", &self.b_o),
            ("b_c", &self.b_c),
        ]
    }

    pub(super) fn weights_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w_i, &mut self.w_f, &mut self.w_o, &mut self.w_c]
    }

    #[cfg(test)]
    pub(super) fn biases_mut(&mut self) -> Vec<&mut Vector> {
        vec![&mut self.b_i, &mut self.b_f, &mut self.b_o, &mut self.b_c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vector,
    pub c: Vector,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: Vector::zeros(hidden),
            c: Vector::zeros(hidden),
        }
    }
}

/// Everything the backward pass needs from one step.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub x: Vector,
    /// `[h_{t-1}, x_t]`
    pub concat: Vector,
    pub input_gate: Vector,
    pub forget_gate: Vector,
    pub output_gate: Vector,
    /// `tanh(W_c·[h, x] + b_c)`
    pub candidate: Vector,
    pub c_prev: Vector,
    pub c: Vector,
    pub tanh_c: Vector,
    pub h: Vector,
}

pub fn lstm_step(p: &LstmParams, s: &LstmState, x: &Vector) -> Result<(LstmState, LstmCache)> {
    let hidden = p.hidden();
    if s.h.len() != hidden || s.c.len() != hidden {
        return Err(Error::Shape {
            op: "lstm_step",
            left: format!("hidden {hidden}"),
            right: format!("state h {} / c {}", s.h.len(), s.c.len()),
        });
    }
    if x.len() != p.input() {
        return Err(Error::Shape {
            op: "lstm_step",
            left: format!("input {}", p.input()),
            right: format!("x of length {}", x.len()),
        });
    }
    let concat = s.h.concat(x);
    let input_gate = sigmoid(&p.w_i.matvec(&concat)?.add(&p.b_i));
    let forget_gate = sigmoid(&p.w_f.matvec(&concat)?.add(&p.b_f));
    let output_gate = sigmoid(&p.w_o.matvec(&concat)?.add(&p.b_o));
    let candidate = tanh_v(&p.w_c.matvec(&concat)?.add(&p.b_c));

    let c: Vector = (0..hidden)
        .map(|k| forget_gate[k] * s.c[k] + input_gate[k] * candidate[k])
        .collect::<Vec<_>>()
        .into();
    let tanh_c = tanh_v(&c);
    let h: Vector = (0..hidden)
        .map(|k| output_gate[k] * tanh_c[k])
        .collect::<Vec<_>>()
        .into();

    let next = LstmState {
        h: h.clone(),
        c: c.clone(),
    };
    let cache = LstmCache {
        x: x.clone(),
        concat,
        input_gate,
        forget_gate,
        output_gate,
        candidate,
        c_prev: s.c.clone(),
        c,
        tanh_c,
        h,
    };
    Ok((next, cache))
}

/// BPTT over all steps; `dh` is the adjoint of the final hidden state.
/// Accumulates into `g`.
pub(super) fn backward(p: &LstmParams, steps: &[LstmCache], mut dh: Vec<f64>, g: &mut LstmParams) {
    let hidden = p.hidden();
    let mut dc = vec![0.0; hidden];
    let mut da_i = vec![0.0; hidden];
    let mut da_f = vec![0.0; hidden];
    let mut da_o = vec![0.0; hidden];
    let mut da_c = vec![0.0; hidden];

    for s in steps.iter().rev() {
        for k in 0..hidden {
            let (i, f, o, cand, tc) = (
                s.input_gate[k],
                s.forget_gate[k],
                s.output_gate[k],
                s.candidate[k],
                s.tanh_c[k],
            );
            let d_o = dh[k] * tc;
            let d_c = dc[k] + dh[k] * o * (1.0 - tc * tc);
            da_i[k] = d_c * cand * i * (1.0 - i);
            da_f[k] = d_c * s.c_prev[k] * f * (1.0 - f);
            da_o[k] = d_o * o * (1.0 - o);
            da_c[k] = d_c * i * (1.0 - cand * cand);
            dc[k] = d_c * f;
        }

        let z = s.concat.as_slice();
        let mut dz = vec![0.0; z.len()];
        for (w, gw, gb, da) in [
            (&p.w_i, &mut g.w_i, &mut g.b_i, &da_i),
            (&p.w_f, &mut g.w_f, &mut g.b_f, &da_f),
            (&p.w_o, &mut g.w_o, &mut g.b_o, &da_o),
            (&p.w_c, &mut g.w_c, &mut g.b_c, &da_c),
        ] {
            gw.add_outer(da, z);
            for (b, d) in gb.as_mut_slice().iter_mut().zip(da.iter()) {
                *b += d;
            }
            w.add_transposed_matvec(da, &mut dz);
        }
        dh.copy_from_slice(&dz[..hidden]);
    }
}
