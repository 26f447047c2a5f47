//! First-order optimizers: classical momentum, Nesterov accelerated gradient
//! and Adam.
//!
//! Parameters are anything that exposes its storage as an ordered list of flat
//! `f64` blocks ([`ParamSet`]). Optimizer state holds one buffer per block and
//! updates blocks in that order. State buffers are allocated on the first step
//! and every later step must present the same block shapes.
//!
//! Update rules, with `g = ∇J`:
//!
//! | optimizer | velocity / moments                         | parameters                   |
//! |-----------|--------------------------------------------|------------------------------|
//! | momentum  | `v ← βv + η·g(θ)`                          | `θ ← θ − v`                  |
//! | NAG       | `v ← βv + η·g(θ − βv)`                     | `θ ← θ − v`                  |
//! | Adam      | `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`  | `θ ← θ − η·m̂/(√v̂ + ε)`       |
//!
//! with `m̂ = m/(1−β₁ᵗ)` and `v̂ = v/(1−β₂ᵗ)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered view of a parameter set as flat blocks.
pub trait ParamSet {
    fn block_names(&self) -> Vec<&'static str>;
    fn blocks(&self) -> Vec<&[f64]>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;
}

impl ParamSet for Vec<f64> {
    fn block_names(&self) -> Vec<&'static str> {
        vec!["theta"]
    }

    fn blocks(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

fn shape_of<P: ParamSet + ?Sized>(p: &P) -> Vec<usize> {
    p.blocks().iter().map(|b| b.len()).collect()
}

fn check_congruent(op: &'static str, expected: &[usize], found: &[usize]) -> Result<()> {
    if expected != found {
        return Err(Error::Shape {
            op,
            left: format!("blocks {expected:?}"),
            right: format!("blocks {found:?}"),
        });
    }
    Ok(())
}

fn check_finite<G: ParamSet>(g: &G) -> Result<()> {
    for (name, block) in g.block_names().into_iter().zip(g.blocks()) {
        if block.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient {
                block: name.to_string(),
            });
        }
    }
    Ok(())
}

/// Zero buffers matching `p` on first use, shape check afterwards.
fn ensure_buffers<P: ParamSet>(op: &'static str, buf: &mut Vec<Vec<f64>>, p: &P) -> Result<()> {
    let shape = shape_of(p);
    if buf.is_empty() {
        *buf = shape.iter().map(|&n| vec![0.0; n]).collect();
        return Ok(());
    }
    let have: Vec<usize> = buf.iter().map(Vec::len).collect();
    check_congruent(op, &have, &shape)
}

pub fn clip_by_global_norm<G: ParamSet>(g: &mut G, max_norm: f64) -> f64 {
    let norm = g
        .blocks()
        .iter()
        .flat_map(|b| b.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for b in g.blocks_mut() {
            for x in b {
                *x *= k;
            }
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Nag,
    Momentum,
}

impl OptimizerKind {
    pub fn label(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "Adam",
            OptimizerKind::Nag => "NAG",
            OptimizerKind::Momentum => "Momentum",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Nag => "nag",
            OptimizerKind::Momentum => "momentum",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "nag" => Ok(OptimizerKind::Nag),
            "momentum" => Ok(OptimizerKind::Momentum),
            _ => Err(Error::UnknownOptimizer {
                name: s.to_string(),
            }),
        }
    }
}

/// Every knob any of the three optimizers reads. Unused fields are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lr: f64,
    /// β for momentum and NAG.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lr: 0.001,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Hyperparams {
    /// Learning rate may be zero (a frozen run); coefficients must lie in `[0, 1)`.
    pub fn validate(&self, kind: OptimizerKind) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Hyperparameter {
                field: "lr",
                value: self.lr,
                bound: "finite and >= 0",
            });
        }
        let unit = |field: &'static str, value: f64| {
            if (0.0..1.0).contains(&value) {
                Ok(())
            } else {
                Err(Error::Hyperparameter {
                    field,
                    value,
                    bound: "0 <= value < 1",
                })
            }
        };
        match kind {
            OptimizerKind::Momentum | OptimizerKind::Nag => unit("momentum", self.momentum),
            OptimizerKind::Adam => {
                unit("beta1", self.beta1)?;
                unit("beta2", self.beta2)?;
                if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
                    return Err(Error::Hyperparameter {
                        field: "epsilon",
                        value: self.epsilon,
                        bound: "finite and > 0",
                    });
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct MomentumState {
    pub lr: f64,
    pub beta: f64,
    velocity: Vec<Vec<f64>>,
}

impl MomentumState {
    pub fn new(lr: f64, beta: f64) -> Self {
        MomentumState {
            lr,
            beta,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    pub fn step<P: ParamSet, G: ParamSet>(&mut self, theta: &mut P, grad: &G) -> Result<()> {
        ensure_buffers("momentum_step", &mut self.velocity, theta)?;
        check_congruent("momentum_step", &shape_of(theta), &shape_of(grad))?;
        check_finite(grad)?;
        let (lr, beta) = (self.lr, self.beta);
        for ((p, g), v) in theta
            .blocks_mut()
            .into_iter()
            .zip(grad.blocks())
            .zip(&mut self.velocity)
        {
            for k in 0..p.len() {
                v[k] = beta * v[k] + lr * g[k];
                p[k] -= v[k];
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NagState {
    pub lr: f64,
    pub beta: f64,
    velocity: Vec<Vec<f64>>,
}

impl NagState {
    pub fn new(lr: f64, beta: f64) -> Self {
        NagState {
            lr,
            beta,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// The look-ahead point `θ − βv`.
    pub fn lookahead<P: ParamSet + Clone>(&mut self, theta: &P) -> Result<P> {
        ensure_buffers("nag_step", &mut self.velocity, theta)?;
        let mut shifted = theta.clone();
        for (p, v) in shifted.blocks_mut().into_iter().zip(&self.velocity) {
            for k in 0..p.len() {
                p[k] -= self.beta * v[k];
            }
        }
        Ok(shifted)
    }

    /// One step; `grad_fn` is evaluated exactly once, at the look-ahead point.
    pub fn step<P, G, F>(&mut self, theta: &mut P, mut grad_fn: F) -> Result<()>
    where
        P: ParamSet + Clone,
        G: ParamSet,
        F: FnMut(&P) -> Result<G>,
    {
        let shifted = self.lookahead(theta)?;
        let grad = grad_fn(&shifted)?;
        check_congruent("nag_step", &shape_of(theta), &shape_of(&grad))?;
        check_finite(&grad)?;
        let (lr, beta) = (self.lr, self.beta);
        for ((p, g), v) in theta
            .blocks_mut()
            .into_iter()
            .zip(grad.blocks())
            .zip(&mut self.velocity)
        {
            for k in 0..p.len() {
                v[k] = beta * v[k] + lr * g[k];
                p[k] -= v[k];
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        AdamState {
            lr,
            beta1,
            beta2,
            epsilon,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// `(m̂, v̂)` for the current step counter. Undefined before the first step.
    pub fn bias_corrected(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let c1 = 1.0 - self.beta1.powf(self.t as f64);
        let c2 = 1.0 - self.beta2.powf(self.t as f64);
        let scale = |buf: &[Vec<f64>], c: f64| -> Vec<Vec<f64>> {
            buf.iter()
                .map(|b| b.iter().map(|x| x / c).collect())
                .collect()
        };
        (scale(&self.m, c1), scale(&self.v, c2))
    }

    pub fn step<P: ParamSet, G: ParamSet>(&mut self, theta: &mut P, grad: &G) -> Result<()> {
        ensure_buffers("adam_step", &mut self.m, theta)?;
        ensure_buffers("adam_step", &mut self.v, theta)?;
        check_congruent("adam_step", &shape_of(theta), &shape_of(grad))?;
        check_finite(grad)?;

        self.t += 1;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.epsilon);
        let c1 = 1.0 - b1.powf(self.t as f64);
        let c2 = 1.0 - b2.powf(self.t as f64);
        let blocks = theta.blocks_mut().into_iter().zip(grad.blocks());
        for ((p, g), (m, v)) in blocks.zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function forms matching the three update rules.
pub fn momentum_step<P: ParamSet, G: ParamSet>(
    s: &mut MomentumState,
    theta: &mut P,
    grad: &G,
) -> Result<()> {
    s.step(theta, grad)
}

pub fn nag_step<P, G, F>(s: &mut NagState, theta: &mut P, grad_fn: F) -> Result<()>
where
    P: ParamSet + Clone,
    G: ParamSet,
    F: FnMut(&P) -> Result<G>,
{
    s.step(theta, grad_fn)
}

pub fn adam_step<P: ParamSet, G: ParamSet>(
    s: &mut AdamState,
    theta: &mut P,
    grad: &G,
) -> Result<()> {
    s.step(theta, grad)
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Momentum(MomentumState),
    Nag(NagState),
    Adam(AdamState),
}

/// Build a freshly zeroed optimizer from its name.
pub fn make_optimizer(name: &str, hp: &Hyperparams) -> Result<Optimizer> {
    Optimizer::new(name.parse()?, hp)
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, hp: &Hyperparams) -> Result<Self> {
        hp.validate(kind)?;
        Ok(match kind {
            OptimizerKind::Momentum => Optimizer::Momentum(MomentumState::new(hp.lr, hp.momentum)),
            OptimizerKind::Nag => Optimizer::Nag(NagState::new(hp.lr, hp.momentum)),
            OptimizerKind::Adam => {
                Optimizer::Adam(AdamState::new(hp.lr, hp.beta1, hp.beta2, hp.epsilon))
            }
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            Optimizer::Momentum(_) => OptimizerKind::Momentum,
            Optimizer::Nag(_) => OptimizerKind::Nag,
            Optimizer::Adam(_) => OptimizerKind::Adam,
        }
    }

    /// Apply one update. `grad` is the gradient at `theta`; `lookahead` is only
    /// called by NAG, which ignores `grad` and uses the gradient at `θ − βv`.
    pub fn step<P, G, F>(&mut self, theta: &mut P, grad: &G, lookahead: F) -> Result<()>
    where
        P: ParamSet + Clone,
        G: ParamSet,
        F: FnMut(&P) -> Result<G>,
    {
        match self {
            Optimizer::Momentum(s) => s.step(theta, grad),
            Optimizer::Nag(s) => s.step(theta, lookahead),
            Optimizer::Adam(s) => s.step(theta, grad),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ∇(θ²/2) = θ
    #[allow(clippy::ptr_arg)] // P = Vec<f64> in the generic step
    fn quad_grad(theta: &Vec<f64>) -> Result<Vec<f64>> {
        Ok(theta.to_vec())
    }

    #[test]
    fn momentum_with_zero_beta_is_sgd() {
        let mut s = MomentumState::new(0.1, 0.0);
        let mut theta = vec![1.0, -2.0];
        s.step(&mut theta, &vec![0.5, 0.25]).unwrap();
        assert_eq!(theta, vec![1.0 - 0.1 * 0.5, -2.0 - 0.1 * 0.25]);
    }

    #[test]
    fn momentum_velocity_decays_geometrically() {
        let mut s = MomentumState::new(0.1, 0.5);
        let mut theta = vec![0.0];
        s.step(&mut theta, &vec![1.0]).unwrap();
        for k in 1..5 {
            s.step(&mut theta, &vec![0.0]).unwrap();
            assert_eq!(s.velocity()[0][0], 0.1 * 0.5f64.powi(k));
        }
    }

    #[test]
    fn momentum_quadratic_hand_iteration() {
        let mut s = MomentumState::new(0.1, 0.9);
        let mut theta = vec![1.0];
        let g = quad_grad(&theta).unwrap();
        s.step(&mut theta, &g).unwrap();
        assert!((theta[0] - 0.9).abs() < 1e-15);
        let g = quad_grad(&theta).unwrap();
        s.step(&mut theta, &g).unwrap();
        assert!((theta[0] - 0.72).abs() < 1e-15);
    }

    #[test]
    fn nag_quadratic_hand_iteration() {
        let mut s = NagState::new(0.1, 0.9);
        let mut theta = vec![1.0];
        let mut seen = Vec::new();
        let mut grad = |p: &Vec<f64>| {
            seen.push(p[0]);
            quad_grad(p)
        };
        s.step(&mut theta, &mut grad).unwrap();
        assert!((theta[0] - 0.9).abs() < 1e-15);
        s.step(&mut theta, &mut grad).unwrap();
        assert!((s.velocity()[0][0] - 0.171).abs() < 1e-15);
        assert!((theta[0] - 0.729).abs() < 1e-15);
        assert_eq!(seen.len(), 2);
        assert!((seen[1] - 0.81).abs() < 1e-15);
    }

    #[test]
    fn nag_first_step_matches_momentum() {
        let mut nag = NagState::new(0.05, 0.9);
        let mut mom = MomentumState::new(0.05, 0.9);
        let (mut a, mut b) = (vec![0.3, -1.7, 2.0], vec![0.3, -1.7, 2.0]);
        nag.step(&mut a, |p: &Vec<f64>| {
            Ok(p.iter().map(|x| x * x).collect::<Vec<_>>())
        })
        .unwrap();
        let g: Vec<f64> = b.iter().map(|x| x * x).collect();
        mom.step(&mut b, &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nag_rejects_non_finite_gradient_by_block() {
        let mut s = NagState::new(0.1, 0.9);
        let mut theta = vec![1.0];
        let err = s
            .step(&mut theta, |_: &Vec<f64>| Ok(vec![f64::NAN]))
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref block } if block == "theta"));
    }

    #[test]
    fn shape_change_between_steps_is_rejected() {
        let mut s = AdamState::new(0.001, 0.9, 0.999, 1e-8);
        let mut theta = vec![1.0, 2.0];
        s.step(&mut theta, &vec![0.1, 0.1]).unwrap();
        assert!(s.step(&mut vec![1.0], &vec![0.1]).is_err());
        assert!(s.step(&mut theta, &vec![0.1]).is_err());
    }

    #[test]
    fn adam_zero_gradient_leaves_theta() {
        let mut s = AdamState::new(0.001, 0.9, 0.999, 1e-8);
        let mut theta = vec![0.4, -0.2];
        s.step(&mut theta, &vec![0.0, 0.0]).unwrap();
        assert_eq!(theta, vec![0.4, -0.2]);
        assert_eq!(s.first_moment()[0], vec![0.0, 0.0]);
        assert_eq!(s.second_moment()[0], vec![0.0, 0.0]);
        assert_eq!(s.t(), 1);
    }

    #[test]
    fn adam_first_step_hand_values() {
        let mut s = AdamState::new(0.001, 0.9, 0.999, 1e-8);
        let mut theta = vec![0.0];
        s.step(&mut theta, &vec![1.0]).unwrap();
        assert!((s.first_moment()[0][0] - 0.1).abs() < 1e-16);
        assert!((s.second_moment()[0][0] - 0.001).abs() < 1e-18);
        let (m_hat, v_hat) = s.bias_corrected();
        assert!((m_hat[0][0] - 1.0).abs() < 1e-15);
        assert!((v_hat[0][0] - 1.0).abs() < 1e-13);
        assert!((theta[0] + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn make_optimizer_defaults_and_errors() {
        let hp = Hyperparams::default();
        let Optimizer::Adam(a) = make_optimizer("adam", &hp).unwrap() else {
            panic!("expected adam")
        };
        assert_eq!(
            (a.beta1, a.beta2, a.lr, a.epsilon),
            (0.9, 0.999, 0.001, 1e-8)
        );
        assert_eq!(a.t(), 0);

        let bad = Hyperparams {
            momentum: 1.0,
            ..hp
        };
        let err = make_optimizer("nag", &bad).unwrap_err();
        assert!(matches!(
            err,
            Error::Hyperparameter {
                field: "momentum",
                ..
            }
        ));

        let err = make_optimizer("sgd", &hp).unwrap_err().to_string();
        assert!(
            err.contains("adam") && err.contains("nag") && err.contains("momentum"),
            "{err}"
        );
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_by_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
