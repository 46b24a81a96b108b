//! Exact Gaussian-process regression with a zero prior mean.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("inputs have dimension {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("kernel matrix is not positive definite even with jitter 1e-2")]
    SingularKernel,
    #[error("targets and inputs differ in length")]
    LengthMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Rbf,
    Matern52,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub lengthscale: f64,
    /// Signal variance `σ_f²`.
    pub signal_variance: f64,
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        match self.kind {
            KernelKind::Rbf => {
                self.signal_variance * libm::exp(-0.5 * r2 / (self.lengthscale * self.lengthscale))
            }
            KernelKind::Matern52 => {
                let s = libm::sqrt(5.0 * r2) / self.lengthscale;
                self.signal_variance * (1.0 + s + s * s / 3.0) * libm::exp(-s)
            }
        }
    }
}

/// Median pairwise Euclidean distance; 1.0 when undefined or zero.
pub fn median_lengthscale(xs: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(xs.len() * xs.len().saturating_sub(1) / 2);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let r2: f64 = xs[i]
                .iter()
                .zip(&xs[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d.push(libm::sqrt(r2));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_unstable_by(f64::total_cmp);
    let m = if d.len() % 2 == 1 {
        d[d.len() / 2]
    } else {
        0.5 * (d[d.len() / 2 - 1] + d[d.len() / 2])
    };
    if m > 0.0 && m.is_finite() {
        m
    } else {
        1.0
    }
}

/// In-place lower Cholesky factor of a row-major `n×n` SPD matrix.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = libm::sqrt(d);
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    true
}

fn forward_sub(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

fn backward_sub_transposed(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Fitted GP posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    inputs: Vec<Vec<f64>>,
    kernel: Kernel,
    noise: f64,
    jitter: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
}

/// Fit on `(inputs, targets)`. With `standardize`, targets are z-scored before
/// fitting and predictions are mapped back.
pub fn fit_gp(
    inputs: &[Vec<f64>],
    targets: &[f64],
    kernel: Kernel,
    noise: f64,
    standardize: bool,
) -> Result<GpModel, GpError> {
    if inputs.is_empty() {
        return Err(GpError::EmptyTrainingSet);
    }
    if inputs.len() != targets.len() {
        return Err(GpError::LengthMismatch);
    }
    let dim = inputs[0].len();
    if let Some(bad) = inputs.iter().find(|x| x.len() != dim) {
        return Err(GpError::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    let n = inputs.len();
    let (y_mean, y_scale) = if standardize {
        let m = targets.iter().sum::<f64>() / n as f64;
        let var = targets.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / n as f64;
        let sd = libm::sqrt(var);
        (m, if sd > 1e-12 { sd } else { 1.0 })
    } else {
        (0.0, 1.0)
    };
    let y: Vec<f64> = targets.iter().map(|t| (t - y_mean) / y_scale).collect();

    let mut base = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = kernel.eval(&inputs[i], &inputs[j]);
            base[i * n + j] = k;
            base[j * n + i] = k;
        }
    }
    let mut jitter = 1e-8;
    let chol = loop {
        let mut a = base.clone();
        for i in 0..n {
            a[i * n + i] += noise + jitter;
        }
        if cholesky(&mut a, n) {
            break a;
        }
        jitter *= 10.0;
        if jitter > 1e-2 * (1.0 + 1e-9) {
            return Err(GpError::SingularKernel);
        }
    };
    let mut alpha = y;
    forward_sub(&chol, n, &mut alpha);
    backward_sub_transposed(&chol, n, &mut alpha);
    Ok(GpModel {
        inputs: inputs.to_vec(),
        kernel,
        noise,
        jitter,
        chol,
        alpha,
        y_mean,
        y_scale,
    })
}

impl GpModel {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Posterior mean and variance (variance clamped at zero) at each point.
    pub fn predict(&self, points: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>), GpError> {
        let n = self.inputs.len();
        let mut means = Vec::with_capacity(points.len());
        let mut vars = Vec::with_capacity(points.len());
        let mut k = vec![0.0; n];
        for x in points {
            if x.len() != self.dim() {
                return Err(GpError::DimensionMismatch {
                    expected: self.dim(),
                    found: x.len(),
                });
            }
            for (ki, xi) in k.iter_mut().zip(&self.inputs) {
                *ki = self.kernel.eval(x, xi);
            }
            let mean: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
            forward_sub(&self.chol, n, &mut k);
            let reduce: f64 = k.iter().map(|v| v * v).sum();
            let var = (self.kernel.eval(x, x) - reduce).max(0.0);
            means.push(self.y_mean + self.y_scale * mean);
            vars.push(self.y_scale * self.y_scale * var);
        }
        Ok((means, vars))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(kind: KernelKind) -> Kernel {
        Kernel {
            kind,
            lengthscale: 0.7,
            signal_variance: 1.3,
        }
    }

    #[test]
    fn single_point_closed_form() {
        let (sf2, sn2, y) = (1.3, 0.2, 0.9);
        let m = fit_gp(&[vec![0.5, 0.1]], &[y], k(KernelKind::Matern52), sn2, false).unwrap();
        let (mu, var) = m.predict(&[vec![0.5, 0.1]]).unwrap();
        let denom = sf2 + sn2 + m.jitter();
        assert!((mu[0] - y * sf2 / denom).abs() < 1e-12);
        assert!((var[0] - (sf2 - sf2 * sf2 / denom)).abs() < 1e-12);
    }

    #[test]
    fn duplicate_inputs_average() {
        let (sf2, sn2) = (1.3, 0.1);
        let x = vec![0.2];
        let m = fit_gp(
            &[x.clone(), x.clone()],
            &[1.0, 3.0],
            k(KernelKind::Rbf),
            sn2,
            false,
        )
        .unwrap();
        let (mu, _) = m.predict(&[x]).unwrap();
        let expect = sf2 * 4.0 / (2.0 * sf2 + sn2 + m.jitter());
        assert!((mu[0] - expect).abs() < 1e-9, "{} vs {}", mu[0], expect);
    }

    #[test]
    fn noiseless_interpolation_and_decay() {
        let xs = vec![vec![0.0], vec![1.0], vec![2.5]];
        let ys = [0.3, -1.0, 2.0];
        let m = fit_gp(&xs, &ys, k(KernelKind::Matern52), 0.0, false).unwrap();
        let (mu, var) = m.predict(&xs).unwrap();
        for i in 0..3 {
            assert!((mu[i] - ys[i]).abs() <= 1e-6);
            assert!(var[i] <= 1e-6);
        }
        let (mu, var) = m.predict(&[vec![1e3]]).unwrap();
        assert!(mu[0].abs() < 1e-6);
        assert!((var[0] - 1.3).abs() < 1e-6);
    }

    #[test]
    fn errors() {
        assert_eq!(
            fit_gp(&[], &[], k(KernelKind::Rbf), 0.1, false).unwrap_err(),
            GpError::EmptyTrainingSet
        );
        let m = fit_gp(&[vec![0.0, 1.0]], &[1.0], k(KernelKind::Rbf), 0.1, true).unwrap();
        assert!(matches!(
            m.predict(&[vec![0.0]]),
            Err(GpError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kernel_is_symmetric() {
        let a = [0.3, -1.2, 4.0];
        let b = [1.1, 0.0, 3.3];
        for kind in [KernelKind::Rbf, KernelKind::Matern52] {
            assert_eq!(k(kind).eval(&a, &b), k(kind).eval(&b, &a));
        }
    }

    #[test]
    fn median_heuristic() {
        assert_eq!(median_lengthscale(&[vec![0.0]]), 1.0);
        assert_eq!(median_lengthscale(&[vec![0.0], vec![1.0], vec![3.0]]), 2.0);
    }
}
