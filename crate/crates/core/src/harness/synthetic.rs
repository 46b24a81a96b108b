//! Synthetic planted-bias benchmark.
//!
//! Features are a Gaussian mixture over the four `(group, label)` cells:
//!
//! ```text
//! x = (2y − 1)·(separation/2)·u + g·group_shift·v + z,   z ~ N(0, I)
//! ```
//!
//! with `u = 1/√d` and `v = (e₀ − e₁)/√2` orthogonal to it. The scorer is a
//! sigmoid-linear function whose weight vector is `u` tilted by a random
//! orthogonal component. Group shift moves every group-1 logit by the same
//! amount, so it never changes a within-group ranking.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::blackbox::{make_planted_bias_scorer, Corruption, PlantedBiasConfig};
use crate::math::{dot, norm, rng_for};
use crate::metrics::pool_group_auc;
use crate::pool::{AuditExample, AuditPool};

const TAG_FEATURES: u64 = 0xfea7;
const TAG_WEIGHTS: u64 = 0x3e16;
const TAG_SCORER: u64 = 0x5c02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub dim: usize,
    /// Fraction of the pool in group 1.
    pub group1_fraction: f64,
    /// Positive rate within group 0 and group 1.
    pub label_rates: [f64; 2],
    /// Distance between the class means.
    pub separation: f64,
    pub group_shift: f64,
    /// Norm of the scorer's tilt away from the class-mean direction.
    pub misalignment: f64,
    /// Norm of the scorer's weight vector.
    pub weight_scale: f64,
    /// Per-id logit noise of the scorer; positive values make the linear
    /// surrogate family misspecified.
    pub noise_scale: f64,
    pub corruption: Corruption,
    pub flip_prob_group0: f64,
    /// Used as given when `band` is `None`.
    pub flip_prob_group1: f64,
    /// Calibrate `flip_prob_group1` so the pool ΔAUC lands in this interval.
    pub band: Option<[f64; 2]>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 5000,
            dim: 60,
            group1_fraction: 0.5,
            label_rates: [0.4, 0.4],
            separation: 2.5,
            group_shift: 0.5,
            misalignment: 0.75,
            weight_scale: 1.0,
            noise_scale: 0.0,
            corruption: Corruption::Labels,
            flip_prob_group0: 0.0,
            flip_prob_group1: 0.0,
            band: Some([0.10, 0.18]),
            seed: 0,
        }
    }
}

/// Generated pool, its scorer and the exact pool ΔAUC under full scoring.
///
/// With label corruption the pool already carries the flipped labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPool {
    pub pool: AuditPool,
    pub scorer: PlantedBiasConfig,
    pub truth: f64,
    /// Black-box score of every pool example, in pool order.
    pub scores: Vec<f64>,
}

fn round_count(n: usize, frac: f64) -> usize {
    libm::round(n as f64 * frac) as usize
}

fn validate(spec: &SyntheticSpec) -> Result<(), HarnessError> {
    let bad = |m: &str| Err(HarnessError::InvalidConfig(format!("synthetic spec: {m}")));
    if spec.dim < 2 {
        return bad("dim must be at least 2");
    }
    if !(0.0..=1.0).contains(&spec.group1_fraction)
        || spec.label_rates.iter().any(|r| !(0.0..=1.0).contains(r))
    {
        return bad("fractions must lie in [0, 1]");
    }
    if let Some([lo, hi]) = spec.band {
        if !(lo <= hi) {
            return bad("band must satisfy lo <= hi");
        }
    }
    Ok(())
}

/// Build the pool and the calibrated scorer. Deterministic in `spec`.
pub fn generate_synthetic_pool(spec: &SyntheticSpec) -> Result<SyntheticPool, HarnessError> {
    validate(spec)?;
    let d = spec.dim;
    let n1 = round_count(spec.n, spec.group1_fraction);
    let sizes = [spec.n - n1, n1];
    let mut cells = Vec::with_capacity(spec.n);
    for g in 0..2u8 {
        let pos = round_count(sizes[g as usize], spec.label_rates[g as usize]);
        if pos == 0 || pos == sizes[g as usize] {
            return Err(HarnessError::InvalidConfig(format!(
                "synthetic spec: group {g} needs both positives and negatives"
            )));
        }
        cells.extend((0..sizes[g as usize]).map(|i| (g, u8::from(i < pos))));
    }
    let mut rng = rng_for(spec.seed, &[TAG_FEATURES]);
    cells.shuffle(&mut rng);

    let u = vec![1.0 / libm::sqrt(d as f64); d];
    let mut v = vec![0.0; d];
    v[0] = core::f64::consts::FRAC_1_SQRT_2;
    v[1] = -core::f64::consts::FRAC_1_SQRT_2;

    let width = format!("{}", spec.n.saturating_sub(1)).len();
    let examples: Vec<AuditExample> = cells
        .iter()
        .enumerate()
        .map(|(i, &(g, y))| {
            let sign = if y == 1 { 1.0 } else { -1.0 };
            let x: Vec<f64> = (0..d)
                .map(|j| {
                    let z: f64 = rng.sample(StandardNormal);
                    sign * 0.5 * spec.separation * u[j] + f64::from(g) * spec.group_shift * v[j] + z
                })
                .collect();
            AuditExample::new(format!("x{i:0width$}"), x, g, y)
        })
        .collect();
    let clean = AuditPool::new(examples)?;

    let mut wrng = rng_for(spec.seed, &[TAG_WEIGHTS]);
    let mut r: Vec<f64> = (0..d).map(|_| wrng.sample(StandardNormal)).collect();
    let along = dot(&r, &u);
    r.iter_mut().zip(&u).for_each(|(ri, ui)| *ri -= along * ui);
    let rn = norm(&r);
    let tilt: Vec<f64> = u
        .iter()
        .zip(&r)
        .map(|(ui, ri)| ui + spec.misalignment * ri / rn)
        .collect();
    let tn = norm(&tilt);
    let weights: Vec<f64> = tilt.iter().map(|t| spec.weight_scale * t / tn).collect();

    let mut config = PlantedBiasConfig {
        base_weights: weights,
        bias: 0.0,
        flip_prob_group0: spec.flip_prob_group0,
        flip_prob_group1: spec.flip_prob_group1,
        noise_scale: spec.noise_scale,
        seed: rng_for(spec.seed, &[TAG_SCORER]).random(),
        corruption: spec.corruption,
    };

    let evaluate = |cfg: &PlantedBiasConfig| -> Result<(AuditPool, Vec<f64>, f64), HarnessError> {
        let scorer = make_planted_bias_scorer(cfg.clone())?;
        let pool = cfg.corrupt_labels(&clean)?;
        let scores = scorer.score_pool(&pool)?;
        let delta = pool_group_auc(&pool, &scores).delta.ok_or_else(|| {
            HarnessError::InvalidConfig("synthetic pool has a single-class group".into())
        })?;
        Ok((pool, scores, delta))
    };

    let Some([lo, hi]) = spec.band else {
        let (pool, scores, truth) = evaluate(&config)?;
        return Ok(SyntheticPool {
            pool,
            scorer: config,
            truth,
            scores,
        });
    };

    // The flipped set only grows with the probability, so ΔAUC rises with
    // flip_prob_group1 up to label noise of one half.
    let target = 0.5 * (lo + hi);
    let at = |p: f64, cfg: &mut PlantedBiasConfig| -> Result<f64, HarnessError> {
        cfg.flip_prob_group1 = p;
        Ok(evaluate(cfg)?.2)
    };
    let (mut a, mut b) = (spec.flip_prob_group0.min(0.5), 0.5);
    let (fa, fb) = (at(a, &mut config)?, at(b, &mut config)?);
    if fa > hi || fb < lo {
        return Err(HarnessError::InfeasibleCalibration {
            lo,
            hi,
            min_reached: fa,
            max_reached: fb,
        });
    }
    let mut best = if (fa - target).abs() <= (fb - target).abs() {
        (a, fa)
    } else {
        (b, fb)
    };
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let fm = at(m, &mut config)?;
        if (fm - target).abs() < (best.1 - target).abs() {
            best = (m, fm);
        }
        if fm < target {
            a = m;
        } else {
            b = m;
        }
    }
    if !(lo..=hi).contains(&best.1) {
        return Err(HarnessError::InfeasibleCalibration {
            lo,
            hi,
            min_reached: fa,
            max_reached: fb,
        });
    }
    config.flip_prob_group1 = best.0;
    let (pool, scores, truth) = evaluate(&config)?;
    Ok(SyntheticPool {
        pool,
        scorer: config,
        truth,
        scores,
    })
}
