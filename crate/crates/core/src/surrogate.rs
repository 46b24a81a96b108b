//! Small differentiable scorers `h_θ: R^d → (0, 1)` used as the surrogate
//! hypothesis class.
//!
//! Two architectures are available: a sigmoid-linear model and a one-hidden-layer
//! tanh MLP with a sigmoid head. Objectives are written as functions of the
//! surrogate's scores on a set of inputs; [`Surrogate::backward`] applies the
//! chain rule to turn `∂L/∂score` into `∂L/∂θ`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{dot, rng_for, sigmoid};

/// Scores are kept inside `[SCORE_FLOOR, 1 − SCORE_FLOOR]`.
pub const SCORE_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurrogateError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("surrogate expects dimension {expected}, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("objective produced a non-finite value or gradient")]
    NonDifferentiableObjective,
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Architecture {
    Linear,
    Mlp { hidden: usize },
}

impl Architecture {
    pub fn param_count(self, dim: usize) -> usize {
        match self {
            Architecture::Linear => dim + 1,
            Architecture::Mlp { hidden } => dim * hidden + hidden + hidden + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    arch: Architecture,
    dim: usize,
    params: Vec<f64>,
}

/// Seeded initialisation: linear weights `N(0, 1/d)`, zero bias; MLP input
/// weights `N(0, 1/d)`, output weights `N(0, 1/H)`, zero biases.
pub fn init_surrogate(
    dim: usize,
    arch: Architecture,
    seed: u64,
) -> Result<Surrogate, SurrogateError> {
    if dim == 0 {
        return Err(SurrogateError::InvalidArchitecture(
            "input dimension must be at least 1".into(),
        ));
    }
    if let Architecture::Mlp { hidden: 0 } = arch {
        return Err(SurrogateError::InvalidArchitecture(
            "hidden width must be at least 1".into(),
        ));
    }
    let mut rng = rng_for(seed, &[0x5375_7272]);
    let mut params = vec![0.0; arch.param_count(dim)];
    let in_scale = 1.0 / libm::sqrt(dim as f64);
    match arch {
        Architecture::Linear => {
            for w in &mut params[..dim] {
                *w = in_scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Architecture::Mlp { hidden } => {
            for w in &mut params[..dim * hidden] {
                *w = in_scale * rng.sample::<f64, _>(StandardNormal);
            }
            let out_scale = 1.0 / libm::sqrt(hidden as f64);
            let off = dim * hidden + hidden;
            for w in &mut params[off..off + hidden] {
                *w = out_scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    Ok(Surrogate { arch, dim, params })
}

#[inline]
fn clamp_score(s: f64) -> f64 {
    s.clamp(SCORE_FLOOR, 1.0 - SCORE_FLOOR)
}

impl Surrogate {
    pub fn from_params(
        arch: Architecture,
        dim: usize,
        params: Vec<f64>,
    ) -> Result<Self, SurrogateError> {
        if params.len() != arch.param_count(dim) {
            return Err(SurrogateError::InvalidArchitecture(format!(
                "{:?} with d={} needs {} parameters, got {}",
                arch,
                dim,
                arch.param_count(dim),
                params.len()
            )));
        }
        Ok(Surrogate { arch, dim, params })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<(), SurrogateError> {
        if x.len() == self.dim {
            Ok(())
        } else {
            Err(SurrogateError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            })
        }
    }

    /// Network output before the sigmoid head.
    pub fn pre_activation(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        match self.arch {
            Architecture::Linear => dot(&self.params[..d], x) + self.params[d],
            Architecture::Mlp { hidden } => {
                let (w1, rest) = self.params.split_at(d * hidden);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let mut z = b2[0];
                for j in 0..hidden {
                    let a = libm::tanh(dot(&w1[j * d..(j + 1) * d], x) + b1[j]);
                    z += w2[j] * a;
                }
                z
            }
        }
    }

    /// Score in `[1e-7, 1 − 1e-7]`.
    pub fn forward(&self, x: &[f64]) -> Result<f64, SurrogateError> {
        self.check_dim(x)?;
        Ok(self.score(x))
    }

    /// [`forward`](Self::forward) without the dimension check.
    #[inline]
    pub fn score(&self, x: &[f64]) -> f64 {
        clamp_score(sigmoid(self.pre_activation(x)))
    }

    /// Accumulate `upstream · ∂score(x)/∂θ` into `grad`.
    ///
    /// The sigmoid derivative is taken from the unclamped output, so gradients
    /// stay finite (and nonzero) in saturated regions.
    pub fn backward(&self, x: &[f64], upstream: f64, grad: &mut [f64]) {
        let d = self.dim;
        match self.arch {
            Architecture::Linear => {
                let s = sigmoid(self.pre_activation(x));
                let g = upstream * s * (1.0 - s);
                for (gi, xi) in grad[..d].iter_mut().zip(x) {
                    *gi += g * xi;
                }
                grad[d] += g;
            }
            Architecture::Mlp { hidden } => {
                let (w1, rest) = self.params.split_at(d * hidden);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let mut acts = vec![0.0; hidden];
                let mut z = b2[0];
                for j in 0..hidden {
                    acts[j] = libm::tanh(dot(&w1[j * d..(j + 1) * d], x) + b1[j]);
                    z += w2[j] * acts[j];
                }
                let s = sigmoid(z);
                let gz = upstream * s * (1.0 - s);
                let off_b1 = d * hidden;
                let off_w2 = off_b1 + hidden;
                for j in 0..hidden {
                    grad[off_w2 + j] += gz * acts[j];
                    let gh = gz * w2[j] * (1.0 - acts[j] * acts[j]);
                    grad[off_b1 + j] += gh;
                    for (gi, xi) in grad[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *gi += gh * xi;
                    }
                }
                grad[off_w2 + hidden] += gz;
            }
        }
    }

    /// `∂score/∂x` (unclamped sigmoid derivative).
    pub fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        match self.arch {
            Architecture::Linear => {
                let s = sigmoid(self.pre_activation(x));
                let g = s * (1.0 - s);
                self.params[..d].iter().map(|w| g * w).collect()
            }
            Architecture::Mlp { hidden } => {
                let (w1, rest) = self.params.split_at(d * hidden);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let mut out = vec![0.0; d];
                let mut z = b2[0];
                let mut dz = vec![0.0; hidden];
                for j in 0..hidden {
                    let a = libm::tanh(dot(&w1[j * d..(j + 1) * d], x) + b1[j]);
                    z += w2[j] * a;
                    dz[j] = w2[j] * (1.0 - a * a);
                }
                let s = sigmoid(z);
                let g = s * (1.0 - s);
                for j in 0..hidden {
                    for (o, w) in out.iter_mut().zip(&w1[j * d..(j + 1) * d]) {
                        *o += g * dz[j] * w;
                    }
                }
                out
            }
        }
    }

    /// Flat text snapshot: one header line, then one parameter per line.
    pub fn to_snapshot(&self) -> String {
        let mut s = String::new();
        let arch = match self.arch {
            Architecture::Linear => String::from("linear"),
            Architecture::Mlp { hidden } => format!("mlp:{hidden}"),
        };
        let _ = writeln!(
            s,
            "# surrogate arch={arch} d={} params={}",
            self.dim,
            self.params.len()
        );
        for p in &self.params {
            let _ = writeln!(s, "{p:?}");
        }
        s
    }

    pub fn from_snapshot(text: &str) -> Result<Self, SurrogateError> {
        let bad = |m: &str| SurrogateError::Snapshot(String::from(m));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty snapshot"))?;
        let header = header
            .strip_prefix("# surrogate ")
            .ok_or_else(|| bad("missing header"))?;
        let (mut arch, mut dim, mut count) = (None, None, None);
        for field in header.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| bad("header field"))?;
            match k {
                "arch" => {
                    arch = Some(if v == "linear" {
                        Architecture::Linear
                    } else {
                        let h = v.strip_prefix("mlp:").ok_or_else(|| bad("arch"))?;
                        Architecture::Mlp {
                            hidden: h.parse().map_err(|_| bad("hidden width"))?,
                        }
                    })
                }
                "d" => dim = Some(v.parse::<usize>().map_err(|_| bad("d"))?),
                "params" => count = Some(v.parse::<usize>().map_err(|_| bad("params"))?),
                _ => return Err(bad("unknown header field")),
            }
        }
        let (arch, dim, count) = match (arch, dim, count) {
            (Some(a), Some(d), Some(c)) => (a, d, c),
            _ => return Err(bad("incomplete header")),
        };
        let params = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| bad("parameter value")))
            .collect::<Result<Vec<_>, _>>()?;
        if params.len() != count {
            return Err(bad("parameter count does not match header"));
        }
        Surrogate::from_params(arch, dim, params)
    }
}

/// A differentiable scalar functional of the surrogate's scores on a fixed
/// list of inputs. `evaluate` writes `∂value/∂score_i` into `dscores`.
pub trait ScoreObjective {
    fn evaluate(&self, scores: &[f64], dscores: &mut [f64]) -> f64;
}

impl<F> ScoreObjective for F
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    fn evaluate(&self, scores: &[f64], dscores: &mut [f64]) -> f64 {
        self(scores, dscores)
    }
}

/// Value and exact parameter gradient of `objective` composed with `h`.
pub fn loss_and_grad<O: ScoreObjective + ?Sized>(
    h: &Surrogate,
    inputs: &[&[f64]],
    objective: &O,
) -> Result<(f64, Vec<f64>), SurrogateError> {
    for x in inputs {
        h.check_dim(x)?;
    }
    let scores: Vec<f64> = inputs.iter().map(|x| h.score(x)).collect();
    let mut dscores = vec![0.0; inputs.len()];
    let value = objective.evaluate(&scores, &mut dscores);
    let mut grad = vec![0.0; h.params.len()];
    for (x, &ds) in inputs.iter().zip(&dscores) {
        if ds != 0.0 {
            h.backward(x, ds, &mut grad);
        }
    }
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(SurrogateError::NonDifferentiableObjective);
    }
    Ok((value, grad))
}
