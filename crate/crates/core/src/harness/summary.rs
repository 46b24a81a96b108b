//! Multi-seed aggregation of audit logs.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{RoundLog, Strategy};
use crate::math::{mean, sample_sd};
use crate::metrics::{
    auec, bound_violation, mean_curve, pearson, queries_to_epsilon, spearman, Auec, ErrorCurve,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummarySettings {
    pub epsilons: Vec<f64>,
    /// AUEC is summed over `t = 1..=auec_horizon`.
    pub auec_horizon: usize,
    /// Budgets at which mean ± SD error is reported.
    pub budgets: Vec<usize>,
}

impl Default for SummarySettings {
    fn default() -> Self {
        SummarySettings {
            epsilons: vec![0.02, 0.05],
            auec_horizon: 1000,
            budgets: vec![100, 250, 500, 1000],
        }
    }
}

/// Error across seeds at one budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetStat {
    pub queries: usize,
    pub mean: f64,
    /// Sample standard deviation (`n − 1`); `None` for a single seed.
    pub sd: Option<f64>,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub strategy: Strategy,
    pub seeds: usize,
    /// `(ε, t_ε)`; `None` when the mean curve never reaches ε.
    pub queries_to_epsilon: Vec<(f64, Option<usize>)>,
    /// `None` when some seed's curve ends before the horizon.
    pub auec: Option<Auec>,
    pub at_budget: Vec<BudgetStat>,
    /// Fraction of post-seed rounds whose certificate contains the truth.
    pub coverage: Option<f64>,
    pub mean_violation: Option<f64>,
    /// Correlation between certificate width and `|midpoint − truth|`, pooled
    /// over every certificate round of every seed.
    pub width_error_pearson: Option<f64>,
    pub width_error_spearman: Option<f64>,
    pub mean_curve: ErrorCurve,
}

/// `(queries, error)` per round with an error; missing estimates become NaN
/// once the truth is known so they are skipped by [`mean_curve`].
pub fn error_curve(logs: &[RoundLog], seed: u64, truth_known: bool) -> ErrorCurve {
    let points = logs
        .iter()
        .filter_map(|l| match l.error {
            Some(e) => Some((l.queries, e)),
            None if truth_known => Some((l.queries, f64::NAN)),
            None => None,
        })
        .collect();
    ErrorCurve::new(points, seed)
        .unwrap_or_else(|_| ErrorCurve::new(Vec::new(), seed).expect("empty curve"))
}

/// Aggregate `(seed, logs)` runs of one strategy against the pool truth.
pub fn summarize(
    strategy: Strategy,
    runs: &[(u64, &[RoundLog])],
    truth: Option<f64>,
    settings: &SummarySettings,
) -> ExperimentSummary {
    let curves: Vec<ErrorCurve> = runs
        .iter()
        .map(|(s, l)| error_curve(l, *s, truth.is_some()))
        .collect();
    let averaged = mean_curve(&curves);
    let queries_to_epsilon = settings
        .epsilons
        .iter()
        .map(|&e| (e, queries_to_epsilon(&averaged, e)))
        .collect();
    let covers_horizon = curves
        .iter()
        .all(|c| c.last_budget().is_some_and(|q| q >= settings.auec_horizon));
    let auec = if covers_horizon && !curves.is_empty() {
        auec(&averaged, settings.auec_horizon).ok()
    } else {
        None
    };

    let at_budget = settings
        .budgets
        .iter()
        .filter_map(|&q| {
            let vals: Vec<f64> = curves
                .iter()
                .filter(|c| c.last_budget().is_some_and(|last| last >= q))
                .filter_map(|c| c.at(q))
                .filter(|v| !v.is_nan())
                .collect();
            if vals.is_empty() {
                return None;
            }
            let sd = if vals.len() > 1 {
                Some(sample_sd(&vals))
            } else {
                None
            };
            Some(BudgetStat {
                queries: q,
                mean: mean(&vals),
                sd,
                seeds: vals.len(),
            })
        })
        .collect();

    let (mut coverage, mut mean_violation, mut pearson_r, mut spearman_r) =
        (None, None, None, None);
    if let Some(truth) = truth {
        let mut covered = Vec::new();
        let mut violations = Vec::new();
        let mut widths = Vec::new();
        let mut errors = Vec::new();
        for (_, logs) in runs {
            for l in logs.iter() {
                let Some(c) = &l.certificate else { continue };
                widths.push(c.width);
                errors.push(libm::fabs(c.midpoint - truth));
                if l.round > 0 {
                    covered.push(if c.covers(truth) { 1.0 } else { 0.0 });
                    violations.push(bound_violation(c.mu_min, c.mu_max, truth).unwrap_or(0.0));
                }
            }
        }
        if !covered.is_empty() {
            coverage = Some(mean(&covered));
            mean_violation = Some(mean(&violations));
        }
        pearson_r = pearson(&widths, &errors);
        spearman_r = spearman(&widths, &errors);
    }

    ExperimentSummary {
        strategy,
        seeds: runs.len(),
        queries_to_epsilon,
        auec,
        at_budget,
        coverage,
        mean_violation,
        width_error_pearson: pearson_r,
        width_error_spearman: spearman_r,
        mean_curve: averaged,
    }
}
