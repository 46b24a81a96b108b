//! Constrained empirical risk minimisation over the λ-version space.
//!
//! The version space holds every surrogate `h` with `|h(x_i) − s*_i| ≤ λ` on
//! all queried points. Two solves push the smooth ΔAUC of `h` to its minimum
//! and maximum inside that set; the resulting pair of hypotheses gives the
//! certificate interval `[mu_min, mu_max]` and the disagreement signal used by
//! the selector.
//!
//! Each solve is an augmented-Lagrangian loop: Adam steps on
//!
//! ```text
//! L(θ) = ∓μ_τ(h_θ; batch) + Σ_i (1/2ρ)·(max(0, ν_i + ρ·g_i(θ))² − ν_i²),
//! g_i(θ) = |h_θ(x_i) − s*_i| − λ
//! ```
//!
//! with the multipliers `ν_i ← max(0, ν_i + ρ·g_i)` updated after every epoch
//! and `ρ` doubled (capped) whenever the feasibility gap fails to shrink by 10%.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Executor;
use crate::math::rng_for;
use crate::metrics::{pool_group_auc, MetricsError, SmoothDelta};
use crate::pool::{AuditPool, Stratum};
use crate::surrogate::Surrogate;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CermError {
    #[error("queried set is empty")]
    EmptyQueriedSet,
    #[error("group {0} lacks a positive or a negative example")]
    DegenerateGroup(u8),
    #[error("id {0:?} is not in the pool")]
    UnknownId(String),
    #[error("id {0:?} queried twice")]
    DuplicateId(String),
    #[error("score {score} for id {id:?} outside [0, 1]")]
    ScoreOutOfRange { id: String, score: f64 },
    #[error("invalid setting: {0}")]
    InvalidSetting(&'static str),
    #[error("surrogate dimension {found} does not match pool dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

impl From<MetricsError> for CermError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::DegenerateGroup(g) => CermError::DegenerateGroup(g),
            _ => CermError::InvalidSetting("smoothing temperature"),
        }
    }
}

/// Examples queried so far with their black-box scores, in query order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueriedSet {
    ids: Vec<String>,
    positions: Vec<usize>,
    scores: Vec<f64>,
    round_cuts: Vec<usize>,
    seen: BTreeSet<usize>,
}

impl QueriedSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append one round of `(id, score)` pairs and close the round.
    pub fn push_round<'a, I>(&mut self, pool: &AuditPool, records: I) -> Result<(), CermError>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        for (id, score) in records {
            let pos = pool
                .position(id)
                .ok_or_else(|| CermError::UnknownId(String::from(id)))?;
            if !(score.is_finite() && (0.0..=1.0).contains(&score)) {
                return Err(CermError::ScoreOutOfRange {
                    id: String::from(id),
                    score,
                });
            }
            if !self.seen.insert(pos) {
                return Err(CermError::DuplicateId(String::from(id)));
            }
            self.ids.push(String::from(id));
            self.positions.push(pos);
            self.scores.push(score);
        }
        self.round_cuts.push(self.ids.len());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Cumulative sizes at the end of each round.
    pub fn round_cuts(&self) -> &[usize] {
        &self.round_cuts
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.seen.contains(&pos)
    }

    /// Number of queried examples per (group, label) cell, canonical order.
    pub fn stratum_counts(&self, pool: &AuditPool) -> [usize; 4] {
        let mut c = [0; 4];
        for &p in &self.positions {
            c[pool.get(p).stratum().index()] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Min,
    Max,
}

/// Which ΔAUC of the extremal hypotheses becomes the certificate endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMetric {
    /// Exact Mann–Whitney ΔAUC of each extremal hypothesis over the pool.
    #[default]
    Exact,
    /// The smooth objective the solver extremises.
    Smooth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CermSettings {
    /// Score tolerance of the version space.
    pub lambda: f64,
    /// Temperature of the sigmoid pair comparator.
    pub tau: f64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    /// Pool examples per primal step for the smooth objective.
    pub batch: usize,
    /// Adam step size at the start of a solve; decays to zero over the solve.
    pub learning_rate: f64,
    pub penalty_init: f64,
    pub penalty_max: f64,
    /// Gap at or below which a hypothesis counts as feasible when picking the
    /// best iterate.
    pub feasibility_tol: f64,
    /// Pool examples used to rank iterates by objective (0 = whole pool).
    pub eval_size: usize,
    /// Penalty-only steps that pull the warm start into the version space.
    pub restore_steps: usize,
    /// Penalty-only steps that project each epoch's iterate back into the
    /// version space before it is scored.
    pub polish_steps: usize,
    /// Adam step size of the penalty-only phases.
    pub restore_learning_rate: f64,
    pub report: ReportMetric,
    /// Parameter indices held fixed during the solve.
    pub frozen: Vec<usize>,
}

impl Default for CermSettings {
    fn default() -> Self {
        CermSettings {
            lambda: 0.01,
            tau: 0.05,
            epochs: 8,
            steps_per_epoch: 40,
            batch: 512,
            learning_rate: 0.05,
            penalty_init: 50.0,
            penalty_max: 1e4,
            feasibility_tol: 1e-4,
            eval_size: 1024,
            restore_steps: 200,
            polish_steps: 50,
            restore_learning_rate: 0.01,
            report: ReportMetric::Exact,
            frozen: Vec::new(),
        }
    }
}

impl CermSettings {
    pub fn validate(&self) -> Result<(), CermError> {
        if !(self.lambda > 0.0) {
            return Err(CermError::InvalidSetting("lambda must be positive"));
        }
        if !(self.tau > 0.0) {
            return Err(CermError::InvalidSetting("tau must be positive"));
        }
        if self.batch < 4 {
            return Err(CermError::InvalidSetting(
                "batch must hold at least four examples",
            ));
        }
        if !(self.restore_learning_rate > 0.0) {
            return Err(CermError::InvalidSetting(
                "restore step size must be positive",
            ));
        }
        if !(self.learning_rate > 0.0)
            || !(self.penalty_init > 0.0)
            || self.penalty_max < self.penalty_init
        {
            return Err(CermError::InvalidSetting(
                "step size and penalty must be positive",
            ));
        }
        Ok(())
    }
}

/// One extremal hypothesis and its ΔAUC values over the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Extremal {
    pub surrogate: Surrogate,
    pub mu_smooth: f64,
    /// `None` only when a group of the pool has a single label class.
    pub mu_exact: Option<f64>,
    pub feasibility_gap: f64,
}

impl Extremal {
    pub fn reported(&self, metric: ReportMetric) -> f64 {
        match metric {
            ReportMetric::Smooth => self.mu_smooth,
            ReportMetric::Exact => self.mu_exact.unwrap_or(self.mu_smooth),
        }
    }
}

/// Interval `[mu_min, mu_max]` for ΔAUC after one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub mu_min: f64,
    pub mu_max: f64,
    pub midpoint: f64,
    pub width: f64,
    pub smooth_min: f64,
    pub smooth_max: f64,
    pub exact_min: Option<f64>,
    pub exact_max: Option<f64>,
    pub feasibility_gap_min: f64,
    pub feasibility_gap_max: f64,
    pub round: usize,
}

impl Certificate {
    pub fn half_width(&self) -> f64 {
        self.width / 2.0
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.mu_min <= truth && truth <= self.mu_max
    }
}

/// `max_i max(0, |h(x_i) − s*_i| − λ)`; zero iff `h` is in the version space.
pub fn feasibility_check(
    h: &Surrogate,
    pool: &AuditPool,
    queried: &QueriedSet,
    lambda: f64,
) -> f64 {
    queried
        .positions
        .iter()
        .zip(&queried.scores)
        .map(|(&p, &s)| (libm::fabs(h.score(&pool.get(p).features) - s) - lambda).max(0.0))
        .fold(0.0, f64::max)
}

/// Proportional per-cell sample of `size` pool positions with at least one
/// member from every non-empty cell.
fn stratified_sample<R: Rng>(pool: &AuditPool, size: usize, rng: &mut R) -> Vec<usize> {
    let n = pool.len();
    if size >= n {
        return (0..n).collect();
    }
    let mut out = Vec::with_capacity(size + 4);
    for s in Stratum::ALL {
        let members = pool.stratum_members(s);
        if members.is_empty() {
            continue;
        }
        let want = ((size * members.len()) / n).clamp(1, members.len());
        out.extend(
            index::sample(rng, members.len(), want)
                .into_iter()
                .map(|i| members[i]),
        );
    }
    out
}

pub(crate) struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub(crate) fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, frozen: &[usize]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - libm::pow(B1, f64::from(self.t));
        let c2 = 1.0 - libm::pow(B2, f64::from(self.t));
        for (i, p) in params.iter_mut().enumerate() {
            if frozen.contains(&i) {
                continue;
            }
            let g = grad[i];
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * g;
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * g * g;
            *p -= lr * (self.m[i] / c1) / (libm::sqrt(self.v[i] / c2) + 1e-12);
        }
    }
}

struct Candidate {
    params: Vec<f64>,
    gap: f64,
    /// Objective in the solve's direction (larger is better).
    score: f64,
}

fn better(a: &Candidate, b: &Candidate, tol: f64) -> bool {
    let (af, bf) = (a.gap <= tol, b.gap <= tol);
    match (af, bf) {
        (true, true) => a.score > b.score,
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.gap < b.gap || (a.gap == b.gap && a.score > b.score),
    }
}

/// Penalty-only Adam on `Σ max(0, |h(x_i) − s_i| − λ/2)²`, stopping as soon
/// as `h` sits inside the λ-version space. Returns the final gap.
fn project(
    h: &mut Surrogate,
    con_x: &[&[f64]],
    con_s: &[f64],
    settings: &CermSettings,
    steps: usize,
) -> f64 {
    let lambda = settings.lambda;
    let gap_of = |h: &Surrogate| {
        con_x
            .iter()
            .zip(con_s)
            .map(|(x, &s)| (libm::fabs(h.score(x) - s) - lambda).max(0.0))
            .fold(0.0, f64::max)
    };
    let mut gap = gap_of(h);
    if gap <= 0.0 || steps == 0 {
        return gap;
    }
    let mut adam = Adam::new(h.params().len());
    let mut grad = vec![0.0; h.params().len()];
    let mut best = (gap, h.params().to_vec());
    for k in 0..steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (x, &s) in con_x.iter().zip(con_s) {
            let r = h.score(x) - s;
            let excess = libm::fabs(r) - 0.5 * lambda;
            if excess > 0.0 {
                h.backward(x, 2.0 * excess * r.signum(), &mut grad);
            }
        }
        let lr = settings.restore_learning_rate / (1.0 + k as f64 / 20.0);
        adam.step(h.params_mut(), &grad, lr, &settings.frozen);
        gap = gap_of(h);
        if gap < best.0 {
            best = (gap, h.params().to_vec());
        }
        if gap <= 0.0 {
            return 0.0;
        }
    }
    h.params_mut().copy_from_slice(&best.1);
    best.0
}

/// Extremise smooth ΔAUC over the λ-version space of `queried`, starting from
/// `init`. Deterministic in `(inputs, seed)`.
pub fn solve_extremal(
    direction: Direction,
    queried: &QueriedSet,
    pool: &AuditPool,
    settings: &CermSettings,
    init: &Surrogate,
    seed: u64,
) -> Result<Extremal, CermError> {
    settings.validate()?;
    if queried.is_empty() {
        return Err(CermError::EmptyQueriedSet);
    }
    if init.dim() != pool.dim() {
        return Err(CermError::DimensionMismatch {
            expected: pool.dim(),
            found: init.dim(),
        });
    }
    let full = SmoothDelta::for_pool(pool, settings.tau)?;
    let sign = match direction {
        Direction::Min => -1.0,
        Direction::Max => 1.0,
    };
    let lambda = settings.lambda;
    let mut rng = rng_for(seed, &[direction as u64, queried.len() as u64]);

    let eval_positions: Vec<usize> = if settings.eval_size == 0 {
        (0..pool.len()).collect()
    } else {
        stratified_sample(pool, settings.eval_size, &mut rng)
    };
    let eval_sd = SmoothDelta::new(
        eval_positions
            .iter()
            .enumerate()
            .map(|(i, &p)| (i, pool.get(p).group, pool.get(p).label)),
        settings.tau,
    )?;
    let eval_x: Vec<&[f64]> = eval_positions
        .iter()
        .map(|&p| pool.get(p).features.as_slice())
        .collect();
    let con_x: Vec<&[f64]> = queried
        .positions
        .iter()
        .map(|&p| pool.get(p).features.as_slice())
        .collect();
    let con_s = &queried.scores;

    let mut h = init.clone();
    let n_params = h.params().len();
    let mut nu = vec![0.0; con_x.len()];
    let mut rho = settings.penalty_init;
    let mut adam = Adam::new(n_params);
    let mut grad = vec![0.0; n_params];
    let total_steps = (settings.epochs * settings.steps_per_epoch).max(1);

    let gap_of = |h: &Surrogate| -> f64 {
        con_x
            .iter()
            .zip(con_s)
            .map(|(x, &s)| (libm::fabs(h.score(x) - s) - lambda).max(0.0))
            .fold(0.0, f64::max)
    };
    let score_of = |h: &Surrogate| -> f64 {
        let s: Vec<f64> = eval_x.iter().map(|x| h.score(x)).collect();
        sign * eval_sd.value(&s)
    };

    project(&mut h, &con_x, con_s, settings, settings.restore_steps);
    let mut best = Candidate {
        params: h.params().to_vec(),
        gap: gap_of(&h),
        score: score_of(&h),
    };
    let mut prev_gap = best.gap;
    let mut step = 0usize;

    for _epoch in 0..settings.epochs {
        for _ in 0..settings.steps_per_epoch {
            let batch = stratified_sample(pool, settings.batch, &mut rng);
            let bx: Vec<&[f64]> = batch
                .iter()
                .map(|&p| pool.get(p).features.as_slice())
                .collect();
            let bs: Vec<f64> = bx.iter().map(|x| h.score(x)).collect();
            let sd = SmoothDelta::new(
                batch
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| (i, pool.get(p).group, pool.get(p).label)),
                settings.tau,
            )?;
            let mut dscores = vec![0.0; bx.len()];
            // Minimise −sign·μ.
            sd.value_and_grad(&bs, -sign, &mut dscores);

            grad.iter_mut().for_each(|g| *g = 0.0);
            for (x, &ds) in bx.iter().zip(&dscores) {
                h.backward(x, ds, &mut grad);
            }
            for (i, (x, &s)) in con_x.iter().zip(con_s).enumerate() {
                let r = h.score(x) - s;
                let g = libm::fabs(r) - lambda;
                let active = (nu[i] + rho * g).max(0.0);
                if active > 0.0 {
                    h.backward(x, active * r.signum(), &mut grad);
                }
            }
            let frac = step as f64 / total_steps as f64;
            let lr = settings.learning_rate * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * frac));
            adam.step(h.params_mut(), &grad, lr, &settings.frozen);
            step += 1;
        }

        let mut gap = 0.0f64;
        for (i, (x, &s)) in con_x.iter().zip(con_s).enumerate() {
            let g = libm::fabs(h.score(x) - s) - lambda;
            nu[i] = (nu[i] + rho * g).max(0.0);
            gap = gap.max(g.max(0.0));
        }
        if gap > settings.feasibility_tol && gap > 0.9 * prev_gap {
            rho = (2.0 * rho).min(settings.penalty_max);
        }
        prev_gap = gap;

        let cand = Candidate {
            params: h.params().to_vec(),
            gap,
            score: score_of(&h),
        };
        if gap > settings.feasibility_tol && settings.polish_steps > 0 {
            let mut polished = h.clone();
            let pg = project(
                &mut polished,
                &con_x,
                con_s,
                settings,
                settings.polish_steps,
            );
            let pc = Candidate {
                params: polished.params().to_vec(),
                gap: pg,
                score: score_of(&polished),
            };
            if better(&pc, &best, settings.feasibility_tol) {
                best = pc;
            }
        }
        if better(&cand, &best, settings.feasibility_tol) {
            best = cand;
        }
    }

    let mut out = h;
    out.params_mut().copy_from_slice(&best.params);
    let scores: Vec<f64> = pool
        .examples()
        .iter()
        .map(|e| out.score(&e.features))
        .collect();
    Ok(Extremal {
        mu_smooth: full.value(&scores),
        mu_exact: pool_group_auc(pool, &scores).delta,
        feasibility_gap: best.gap,
        surrogate: out,
    })
}

/// Both extremal solves plus the ordered certificate. `warm` seeds the solves
/// with the previous round's `(min, max)` hypotheses.
pub fn certificate<E: Executor>(
    queried: &QueriedSet,
    pool: &AuditPool,
    settings: &CermSettings,
    warm: (&Surrogate, &Surrogate),
    round: usize,
    seed: u64,
    exec: &E,
) -> Result<(Certificate, Extremal, Extremal), CermError> {
    let (lo, hi) = exec.join(
        || solve_extremal(Direction::Min, queried, pool, settings, warm.0, seed),
        || solve_extremal(Direction::Max, queried, pool, settings, warm.1, seed),
    );
    let (mut lo, mut hi) = (lo?, hi?);
    if lo.reported(settings.report) > hi.reported(settings.report) {
        core::mem::swap(&mut lo, &mut hi);
    }
    let (mu_min, mu_max) = (lo.reported(settings.report), hi.reported(settings.report));
    let cert = Certificate {
        mu_min,
        mu_max,
        midpoint: 0.5 * (mu_min + mu_max),
        width: mu_max - mu_min,
        smooth_min: lo.mu_smooth,
        smooth_max: hi.mu_smooth,
        exact_min: lo.mu_exact,
        exact_max: hi.mu_exact,
        feasibility_gap_min: lo.feasibility_gap,
        feasibility_gap_max: hi.feasibility_gap,
        round,
    };
    Ok((cert, lo, hi))
}
