//! ΔAUC estimators (exact and smooth), audit-evaluation metrics and the
//! McDiarmid passive sample-size bound.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::sigmoid;
use crate::pool::AuditPool;
use crate::surrogate::Surrogate;

/// Largest `|s − ½|/τ` for which exponentiated scores stay finite in pair sums.
const EXP_LIMIT: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no score for id {0:?}")]
    MissingScore(String),
    #[error("unknown id {0:?}")]
    UnknownId(String),
    #[error("group {0} lacks a positive or a negative example")]
    DegenerateGroup(u8),
    #[error("interval lower end exceeds upper end")]
    InvertedInterval,
    #[error("error curve does not reach the requested budget")]
    CurveTooShort,
    #[error("query budgets must be strictly increasing")]
    NonIncreasingBudgets,
    #[error("argument out of range: {0}")]
    InvalidRange(&'static str),
}

/// Per-group exact ROC-AUC and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupAucResult {
    pub auc_g0: Option<f64>,
    pub auc_g1: Option<f64>,
    /// `auc_g0 − auc_g1`, present iff both are defined.
    pub delta: Option<f64>,
    /// Positives per group (`m_g`).
    pub positives: [usize; 2],
    /// Negatives per group (`n_g`).
    pub negatives: [usize; 2],
}

/// Mann–Whitney AUC: the fraction of positive–negative pairs ranked correctly,
/// ties counting one half. `None` when either side is empty.
pub fn exact_auc(positives: &[f64], negatives: &[f64]) -> Option<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return None;
    }
    let mut pos = positives.to_vec();
    let mut neg = negatives.to_vec();
    pos.sort_unstable_by(f64::total_cmp);
    neg.sort_unstable_by(f64::total_cmp);
    // Twice the Mann–Whitney U, so ties stay integral.
    let mut twice_u: u64 = 0;
    let (mut lt, mut le) = (0usize, 0usize);
    for &p in &pos {
        while lt < neg.len() && neg[lt] < p {
            lt += 1;
        }
        if le < lt {
            le = lt;
        }
        while le < neg.len() && neg[le] <= p {
            le += 1;
        }
        twice_u += (2 * lt + (le - lt)) as u64;
    }
    Some(twice_u as f64 / (2 * pos.len() * neg.len()) as f64)
}

fn assemble(by_cell: [[Vec<f64>; 2]; 2]) -> GroupAucResult {
    let auc = |g: usize| exact_auc(&by_cell[g][1], &by_cell[g][0]);
    let (a0, a1) = (auc(0), auc(1));
    GroupAucResult {
        auc_g0: a0,
        auc_g1: a1,
        delta: match (a0, a1) {
            (Some(x), Some(y)) => Some(x - y),
            _ => None,
        },
        positives: [by_cell[0][1].len(), by_cell[1][1].len()],
        negatives: [by_cell[0][0].len(), by_cell[1][0].len()],
    }
}

/// Exact per-group AUCs over the examples `ids`, scored by `scores`.
pub fn group_auc(
    scores: &BTreeMap<String, f64>,
    pool: &AuditPool,
    ids: &[&str],
) -> Result<GroupAucResult, MetricsError> {
    let mut cells: [[Vec<f64>; 2]; 2] = Default::default();
    for id in ids {
        let pos = pool
            .position(id)
            .ok_or_else(|| MetricsError::UnknownId(String::from(*id)))?;
        let s = *scores
            .get(*id)
            .ok_or_else(|| MetricsError::MissingScore(String::from(*id)))?;
        let ex = pool.get(pos);
        cells[usize::from(ex.group)][usize::from(ex.label)].push(s);
    }
    Ok(assemble(cells))
}

/// [`group_auc`] over pool positions, with `scores` indexed by position in `positions`.
pub fn group_auc_at(pool: &AuditPool, positions: &[usize], scores: &[f64]) -> GroupAucResult {
    let mut cells: [[Vec<f64>; 2]; 2] = Default::default();
    for (&p, &s) in positions.iter().zip(scores) {
        let ex = pool.get(p);
        cells[usize::from(ex.group)][usize::from(ex.label)].push(s);
    }
    assemble(cells)
}

/// Exact group AUCs over the whole pool; `scores` in pool order.
pub fn pool_group_auc(pool: &AuditPool, scores: &[f64]) -> GroupAucResult {
    let mut cells: [[Vec<f64>; 2]; 2] = Default::default();
    for (ex, &s) in pool.examples().iter().zip(scores) {
        cells[usize::from(ex.group)][usize::from(ex.label)].push(s);
    }
    assemble(cells)
}

/// Smooth ΔAUC over a fixed set of labelled points: each group AUC is the mean
/// of `σ((s⁺ − s⁻)/τ)` over its positive–negative pairs.
///
/// Indices refer to a caller-owned score slice.
#[derive(Debug, Clone)]
pub struct SmoothDelta {
    pos: [Vec<usize>; 2],
    neg: [Vec<usize>; 2],
    tau: f64,
}

impl SmoothDelta {
    /// `members` yields `(index into score slice, group, label)`.
    pub fn new<I>(members: I, tau: f64) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = (usize, u8, u8)>,
    {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(MetricsError::InvalidRange("tau must be positive"));
        }
        let mut pos: [Vec<usize>; 2] = Default::default();
        let mut neg: [Vec<usize>; 2] = Default::default();
        for (i, g, y) in members {
            if y == 1 {
                pos[usize::from(g)].push(i);
            } else {
                neg[usize::from(g)].push(i);
            }
        }
        for g in 0..2 {
            if pos[g].is_empty() || neg[g].is_empty() {
                return Err(MetricsError::DegenerateGroup(g as u8));
            }
        }
        Ok(SmoothDelta { pos, neg, tau })
    }

    /// Over the whole pool, indices are pool positions.
    pub fn for_pool(pool: &AuditPool, tau: f64) -> Result<Self, MetricsError> {
        Self::new(
            pool.examples()
                .iter()
                .enumerate()
                .map(|(i, e)| (i, e.group, e.label)),
            tau,
        )
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Smooth AUC of each group.
    pub fn group_values(&self, scores: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (g, o) in out.iter_mut().enumerate() {
            *o = self.group_sum(g, scores, 0.0, None)
                / (self.pos[g].len() * self.neg[g].len()) as f64;
        }
        out
    }

    /// Exponentiated scores `exp((s − ½)/τ)` when none can overflow.
    fn exp_scores(&self, idx: &[usize], scores: &[f64]) -> Option<Vec<f64>> {
        let inv_tau = 1.0 / self.tau;
        idx.iter()
            .map(|&i| {
                let z = (scores[i] - 0.5) * inv_tau;
                (z.abs() <= EXP_LIMIT).then(|| libm::exp(z))
            })
            .collect()
    }

    /// `Σ σ((s⁺ − s⁻)/τ)` over the pairs of group `g`. With `grad`, adds
    /// `w · ∂sum/∂scores` into the slice.
    ///
    /// `σ((a − b)/τ) = eᵃ/(eᵃ + eᵇ)` in exponentiated form, which trades the
    /// per-pair `exp` for a division.
    fn group_sum(&self, g: usize, scores: &[f64], w: f64, grad: Option<&mut [f64]>) -> f64 {
        let (pos, neg) = (&self.pos[g], &self.neg[g]);
        let inv_tau = 1.0 / self.tau;
        let mut acc = 0.0;
        if let (Some(ep), Some(en)) = (self.exp_scores(pos, scores), self.exp_scores(neg, scores)) {
            match grad {
                None => {
                    for &a in &ep {
                        acc += en.iter().map(|&b| a / (a + b)).sum::<f64>();
                    }
                }
                Some(d) => {
                    let mut dneg = vec![0.0; neg.len()];
                    for (&p, &a) in pos.iter().zip(&ep) {
                        let mut dp = 0.0;
                        for (&b, dn) in en.iter().zip(dneg.iter_mut()) {
                            let r = 1.0 / (a + b);
                            let c = a * r;
                            acc += c;
                            let dc = c * b * r;
                            dp += dc;
                            *dn += dc;
                        }
                        d[p] += w * inv_tau * dp;
                    }
                    for (&n, dn) in neg.iter().zip(&dneg) {
                        d[n] -= w * inv_tau * dn;
                    }
                }
            }
            return acc;
        }
        let mut grad = grad;
        for &p in pos {
            let sp = scores[p];
            let mut dp = 0.0;
            for &n in neg {
                let c = sigmoid((sp - scores[n]) * inv_tau);
                acc += c;
                if let Some(d) = grad.as_deref_mut() {
                    let dc = c * (1.0 - c);
                    dp += dc;
                    d[n] -= w * inv_tau * dc;
                }
            }
            if let Some(d) = grad.as_deref_mut() {
                d[p] += w * inv_tau * dp;
            }
        }
        acc
    }

    pub fn value(&self, scores: &[f64]) -> f64 {
        let v = self.group_values(scores);
        v[0] - v[1]
    }

    /// Value, and `sign · ∂value/∂scores` accumulated into `dscores`.
    pub fn value_and_grad(&self, scores: &[f64], sign: f64, dscores: &mut [f64]) -> f64 {
        let mut value = 0.0;
        for g in 0..2 {
            let gs = if g == 0 { 1.0 } else { -1.0 };
            let norm = 1.0 / (self.pos[g].len() * self.neg[g].len()) as f64;
            value += gs * norm * self.group_sum(g, scores, sign * gs * norm, Some(&mut *dscores));
        }
        value
    }
}

/// Smooth ΔAUC of a surrogate over the whole pool.
pub fn smooth_delta_auc(h: &Surrogate, pool: &AuditPool, tau: f64) -> Result<f64, MetricsError> {
    let sd = SmoothDelta::for_pool(pool, tau)?;
    let scores: Vec<f64> = pool
        .examples()
        .iter()
        .map(|e| h.score(&e.features))
        .collect();
    Ok(sd.value(&scores))
}

/// Absolute estimation error logged against cumulative query count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    points: Vec<(usize, f64)>,
    pub seed: u64,
}

impl ErrorCurve {
    pub fn new(points: Vec<(usize, f64)>, seed: u64) -> Result<Self, MetricsError> {
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(MetricsError::NonIncreasingBudgets);
        }
        Ok(ErrorCurve { points, seed })
    }

    pub fn points(&self) -> &[(usize, f64)] {
        &self.points
    }

    /// Error in force at budget `t`: the last logged value at or before `t`,
    /// or the first logged value for budgets before the first log.
    pub fn at(&self, t: usize) -> Option<f64> {
        let first = self.points.first()?;
        let idx = self.points.partition_point(|&(q, _)| q <= t);
        Some(if idx == 0 {
            first.1
        } else {
            self.points[idx - 1].1
        })
    }

    pub fn last_budget(&self) -> Option<usize> {
        self.points.last().map(|p| p.0)
    }
}

/// Pointwise mean over seeds at every budget logged by any seed. Each seed's
/// curve is step-interpolated; NaN entries (missing estimates) are skipped, and
/// a budget where every seed is missing is dropped.
pub fn mean_curve(curves: &[ErrorCurve]) -> ErrorCurve {
    let mut budgets: Vec<usize> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.0))
        .collect();
    budgets.sort_unstable();
    budgets.dedup();
    let mut points = Vec::with_capacity(budgets.len());
    for t in budgets {
        let vals: Vec<f64> = curves
            .iter()
            .filter(|c| c.points.first().is_some_and(|p| p.0 <= t))
            .filter_map(|c| c.at(t))
            .filter(|v| !v.is_nan())
            .collect();
        if !vals.is_empty() {
            points.push((t, vals.iter().sum::<f64>() / vals.len() as f64));
        }
    }
    ErrorCurve { points, seed: 0 }
}

/// Area under the error curve over the first `t_max` queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Auec {
    /// `Σ_{t=1..t_max} ē_t` (error × queries).
    pub total: f64,
    /// `total / t_max` (mean error per query).
    pub per_query: f64,
}

/// Sum of the step-interpolated curve over `t = 1..=t_max`.
pub fn auec(curve: &ErrorCurve, t_max: usize) -> Result<Auec, MetricsError> {
    if t_max == 0 {
        return Err(MetricsError::InvalidRange("t_max must be positive"));
    }
    match curve.last_budget() {
        Some(last) if last >= t_max => {}
        _ => return Err(MetricsError::CurveTooShort),
    }
    let total: f64 = (1..=t_max).filter_map(|t| curve.at(t)).sum();
    Ok(Auec {
        total,
        per_query: total / t_max as f64,
    })
}

/// First logged budget with mean error `≤ epsilon`; `None` when never reached.
pub fn queries_to_epsilon(mean_curve: &ErrorCurve, epsilon: f64) -> Option<usize> {
    mean_curve
        .points
        .iter()
        .find(|p| p.1 <= epsilon)
        .map(|p| p.0)
}

/// Distance of `truth` from `[lo, hi]`; zero inside.
pub fn bound_violation(lo: f64, hi: f64, truth: f64) -> Result<f64, MetricsError> {
    if lo > hi {
        return Err(MetricsError::InvertedInterval);
    }
    Ok((lo - truth).max(truth - hi).max(0.0))
}

/// Passive sample size guaranteeing `|ΔAUC estimate − ΔAUC| < ε` with
/// probability `1 − δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleSizeBound {
    /// Balanced classes: this many positives and negatives per group.
    PerCell(u64),
    /// Unbalanced: need `m·n / (2(m + n)) ≥ rhs` in each group.
    Constraint { rhs: f64 },
}

impl SampleSizeBound {
    /// Whether a group with `m` positives and `n` negatives meets the bound.
    pub fn is_satisfied(&self, m: u64, n: u64) -> bool {
        match *self {
            SampleSizeBound::PerCell(k) => m >= k && n >= k,
            SampleSizeBound::Constraint { rhs } => {
                m > 0 && n > 0 && (m as f64 * n as f64) / (2.0 * (m + n) as f64) >= rhs
            }
        }
    }
}

pub fn mcdiarmid_sample_size(
    epsilon: f64,
    delta: f64,
    balanced: bool,
) -> Result<SampleSizeBound, MetricsError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(MetricsError::InvalidRange("epsilon must lie in (0, 1)"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MetricsError::InvalidRange("delta must lie in (0, 1)"));
    }
    let log_term = libm::log(4.0 / delta);
    Ok(if balanced {
        SampleSizeBound::PerCell(libm::ceil(8.0 * log_term / (epsilon * epsilon)) as u64)
    } else {
        SampleSizeBound::Constraint {
            rhs: 2.0 * log_term / (epsilon * epsilon),
        }
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / libm::sqrt(sxx * syy))
}

/// Ranks with ties averaged (1-based).
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}
