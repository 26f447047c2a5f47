use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sigmoid, tanh_v, Matrix, Vector};

/// `w_h`/`b_h` are the candidate weights, exported under the names `W` and `b`.
/// The candidate acts on `[r ⊙ h_{t-1}, x_t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w_h: Matrix,
    pub b_z: Vector,
    pub b_r: Vector,
    pub b_h: Vector,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = Matrix::zeros(hidden, hidden + input);
        let b = Vector::zeros(hidden);
        GruParams {
            w_z: w.clone(),
            w_r: w.clone(),
            w_h: w,
            b_z: b.clone(),
            b_r: b.clone(),
            b_h: b,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_z.rows()
    }

    pub fn input(&self) -> usize {
        self.w_z.cols() - self.w_z.rows()
    }

    pub(super) fn named_weights(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("W_z", &self.w_z), ("W_r", &self.w_r), ("W", &self.w_h)]
    }

    pub(super) fn named_biases(&self) -> Vec<(&'static str, &Vector)> {
        vec![("b_z", &self.b_z), ("b_r", &self.b_r), ("b", &self.b_h)]
    }

    pub(super) fn weights_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w_z, &mut self.w_r, &mut self.w_h]
    }

    #[cfg(test)]
    pub(super) fn biases_mut(&mut self) -> Vec<&mut Vector> {
        vec![&mut self.b_z, &mut self.b_r, &mut self.b_h]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruState {
    pub h: Vector,
}

impl GruState {
    pub fn zeros(hidden: usize) -> Self {
        GruState {
            h: Vector::zeros(hidden),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Vector,
    pub h_prev: Vector,
    /// `[h_{t-1}, x_t]`
    pub concat: Vector,
    pub update_gate: Vector,
    pub reset_gate: Vector,
    /// `[r ⊙ h_{t-1}, x_t]`
    pub reset_concat: Vector,
    pub candidate: Vector,
    pub h: Vector,
}

pub fn gru_step(p: &GruParams, s: &GruState, x: &Vector) -> Result<(GruState, GruCache)> {
    let hidden = p.hidden();
    if s.h.len() != hidden {
        return Err(Error::Shape {
            op: "gru_step",
            left: format!("hidden {hidden}"),
            right: format!("state h {}", s.h.len()),
        });
    }
    if x.len() != p.input() {
        return Err(Error::Shape {
            op: "gru_step",
            left: format!("input {}", p.input()),
            right: format!("x of length {}", x.len()),
        });
    }
    let concat = s.h.concat(x);
    let update_gate = sigmoid(&p.w_z.matvec(&concat)?.add(&p.b_z));
    let reset_gate = sigmoid(&p.w_r.matvec(&concat)?.add(&p.b_r));
    let gated_h: Vector = (0..hidden)
        .map(|k| reset_gate[k] * s.h[k])
        .collect::<Vec<_>>()
        .into();
    let reset_concat = gated_h.concat(x);
    let candidate = tanh_v(&p.w_h.matvec(&reset_concat)?.add(&p.b_h));
    let h: Vector = (0..hidden)
        .map(|k| (1.0 - update_gate[k]) * s.h[k] + update_gate[k] * candidate[k])
        .collect::<Vec<_>>()
        .into();

    let cache = GruCache {
        x: x.clone(),
        h_prev: s.h.clone(),
        concat,
        update_gate,
        reset_gate,
        reset_concat,
        candidate,
        h: h.clone(),
    };
    Ok((GruState { h }, cache))
}

pub(super) fn backward(p: &GruParams, steps: &[GruCache], mut dh: Vec<f64>, g: &mut GruParams) {
    let hidden = p.hidden();
    let mut da_z = vec![0.0; hidden];
    let mut da_r = vec![0.0; hidden];
    let mut da_h = vec![0.0; hidden];
    let mut dh_prev = vec![0.0; hidden];

    for s in steps.iter().rev() {
        for k in 0..hidden {
            let z = s.update_gate[k];
            let cand = s.candidate[k];
            da_z[k] = dh[k] * (cand - s.h_prev[k]) * z * (1.0 - z);
            da_h[k] = dh[k] * z * (1.0 - cand * cand);
            dh_prev[k] = dh[k] * (1.0 - z);
        }

        // Candidate path through [r ⊙ h_prev, x].
        g.w_h.add_outer(&da_h, s.reset_concat.as_slice());
        for (b, d) in g.b_h.as_mut_slice().iter_mut().zip(&da_h) {
            *b += d;
        }
        let mut d_reset_concat = vec![0.0; s.reset_concat.len()];
        p.w_h.add_transposed_matvec(&da_h, &mut d_reset_concat);
        for k in 0..hidden {
            let r = s.reset_gate[k];
            let d_gated = d_reset_concat[k];
            da_r[k] = d_gated * s.h_prev[k] * r * (1.0 - r);
            dh_prev[k] += d_gated * r;
        }

        let z = s.concat.as_slice();
        let mut dz = vec![0.0; z.len()];
        for (w, gw, gb, da) in [
            (&p.w_z, &mut g.w_z, &mut g.b_z, &da_z),
            (&p.w_r, &mut g.w_r, &mut g.b_r, &da_r),
        ] {
            gw.add_outer(da, z);
            for (b, d) in gb.as_mut_slice().iter_mut().zip(da.iter()) {
                *b += d;
            }
            w.add_transposed_matvec(da, &mut dz);
        }
        for k in 0..hidden {
            dh[k] = dh_prev[k] + dz[k];
        }
    }
}
