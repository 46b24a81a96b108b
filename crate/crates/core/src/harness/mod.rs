//! The audit loop, the synthetic planted-bias benchmark and multi-seed
//! aggregation.
//!
//! A run starts with a seed round that queries `seed_multiplier` examples from
//! every `(group, label)` cell. Each later round selects up to `batch` new
//! examples with the configured [`Strategy`], queries them and logs an
//! estimate: the certificate midpoint for certificate-based strategies and the
//! empirical plug-in ΔAUC on the queried set otherwise.

mod summary;
mod synthetic;

pub use summary::{error_curve, summarize, BudgetStat, ExperimentSummary, SummarySettings};
pub use synthetic::{generate_synthetic_pool, SyntheticPool, SyntheticSpec};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blackbox::{check_response, BlackBoxError, ScoreOracle};
use crate::cerm::{certificate, Adam, CermError, CermSettings, Certificate, QueriedSet};
use crate::exec::Executor;
use crate::gp::{fit_gp, median_lengthscale, GpError, GpModel, Kernel, KernelKind};
use crate::math::{mix64, norm, rng_for};
use crate::metrics::{group_auc_at, MetricsError};
use crate::pool::{AuditPool, PoolError, Stratum, StratumKeys};
use crate::selection::{
    bo_combine, build_features, disagreement, distribution_weights, mmr_select, select_power,
    select_random, select_stratified, top_k, Schedule, SelectionError, SelectionScore,
};
use crate::surrogate::{init_surrogate, Architecture, Surrogate, SurrogateError};

const TAG_SEED_ROUND: u64 = 0x5eed;
const TAG_SELECT: u64 = 0x5e1e;
const TAG_CANDIDATES: u64 = 0xca4d;
const TAG_INIT: u64 = 0x1417;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no flip probability puts pool ΔAUC in [{lo}, {hi}]; reachable range is [{min_reached}, {max_reached}]")]
    InfeasibleCalibration {
        lo: f64,
        hi: f64,
        min_reached: f64,
        max_reached: f64,
    },
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    BlackBox(#[from] BlackBoxError),
    #[error(transparent)]
    Cerm(#[from] CermError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Gp(#[from] GpError),
}

fn config_err(msg: &str) -> HarnessError {
    HarnessError::InvalidConfig(String::from(msg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Uniform sampling, plug-in estimate.
    Random,
    /// Proportional stratified sampling, plug-in estimate.
    Stratified,
    /// Sampling `∝ (p(1−p))^γ` on a pilot score, plug-in estimate.
    Power,
    /// Stratified sampling, certificate midpoint estimate.
    CermStratified,
    /// Disagreement selection with regularisers, certificate midpoint.
    BafaDisagreement,
    /// Disagreement mixed with GP/UCB acquisition, certificate midpoint.
    BafaBo,
    /// GP/UCB acquisition alone, plug-in estimate.
    BoOnly,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Random,
        Strategy::Stratified,
        Strategy::Power,
        Strategy::CermStratified,
        Strategy::BafaDisagreement,
        Strategy::BafaBo,
        Strategy::BoOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Stratified => "stratified",
            Strategy::Power => "power",
            Strategy::CermStratified => "cerm_stratified",
            Strategy::BafaDisagreement => "bafa_disagreement",
            Strategy::BafaBo => "bafa_bo",
            Strategy::BoOnly => "bo_only",
        }
    }

    /// Whether the strategy computes a certificate every round.
    pub fn uses_certificate(self) -> bool {
        matches!(
            self,
            Strategy::CermStratified | Strategy::BafaDisagreement | Strategy::BafaBo
        )
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| HarnessError::InvalidConfig(alloc::format!("unknown strategy {s:?}")))
    }
}

/// Where power sampling takes `p(x)` from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerSource {
    /// A surrogate fitted to the seed round's scores.
    #[default]
    Pilot,
    /// The black box's own scores (synthetic benchmarks only).
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditSettings {
    pub strategy: Strategy,
    /// Total black-box queries, seed round included.
    pub budget: usize,
    /// Queries per round after the seed round.
    pub batch: usize,
    /// Seed-round examples per `(group, label)` cell.
    pub seed_multiplier: usize,
    pub architecture: Architecture,
    pub cerm: CermSettings,
    /// Unqueried candidates scored per round.
    pub candidates: usize,
    /// UCB exploration weight.
    pub beta: f64,
    /// MMR diversity penalty; 0 selects plain top-k.
    pub gamma_div: f64,
    /// Power-sampling exponent.
    pub gamma_pow: f64,
    /// Distribution-matching strength over rounds.
    pub alpha: Schedule,
    /// Weight of the squashed acquisition over rounds.
    pub mix: Schedule,
    pub ratio_cap: f64,
    pub kernel: KernelKind,
    /// GP noise variance on standardised targets.
    pub gp_noise: f64,
    /// Most recent BO observations kept for the GP fit.
    pub gp_max_points: usize,
    /// Restrict acquisition credit to the top-disagreement quantile.
    pub bo_quantile: Option<f64>,
    /// Append the group bit to the acquisition features.
    pub phi_group: bool,
    /// Append `‖∂dis/∂x‖` to the acquisition features.
    pub phi_gradient: bool,
    /// Append the raw example features to the acquisition features.
    pub phi_features: bool,
    pub stratify_by: StratumKeys,
    pub power_source: PowerSource,
    /// Adam steps for the power-sampling pilot fit.
    pub pilot_steps: usize,
    /// Stop once the certificate half-width is at most this value.
    pub early_stop: Option<f64>,
}

impl Default for AuditSettings {
    fn default() -> Self {
        AuditSettings {
            strategy: Strategy::BafaDisagreement,
            budget: 600,
            batch: 16,
            seed_multiplier: 1,
            architecture: Architecture::Linear,
            cerm: CermSettings::default(),
            candidates: 1000,
            beta: 1.0,
            gamma_div: 0.2,
            gamma_pow: 1.0,
            alpha: Schedule {
                warmup_rounds: 1,
                ramp_rounds: 3,
                max_value: 2.0,
            },
            mix: Schedule {
                warmup_rounds: 3,
                ramp_rounds: 5,
                max_value: 0.5,
            },
            ratio_cap: 5.0,
            kernel: KernelKind::Matern52,
            gp_noise: 0.1,
            gp_max_points: 256,
            bo_quantile: None,
            phi_group: true,
            phi_gradient: false,
            phi_features: false,
            stratify_by: StratumKeys::GroupAndLabel,
            power_source: PowerSource::Pilot,
            pilot_steps: 200,
            early_stop: None,
        }
    }
}

impl AuditSettings {
    pub fn seed_size(&self) -> usize {
        4 * self.seed_multiplier
    }

    pub fn validate(&self, pool_len: usize) -> Result<(), HarnessError> {
        if self.batch == 0 {
            return Err(config_err("batch must be at least 1"));
        }
        if self.seed_multiplier == 0 {
            return Err(config_err("seed_multiplier must be at least 1"));
        }
        if self.budget < self.seed_size() {
            return Err(config_err("budget is smaller than the seed round"));
        }
        if self.budget > pool_len {
            return Err(config_err("budget exceeds the pool size"));
        }
        if self.candidates < self.batch {
            return Err(config_err("candidate pool smaller than the batch"));
        }
        if !(self.ratio_cap >= 1.0) {
            return Err(config_err("ratio_cap must be at least 1"));
        }
        if !(self.beta.is_finite()
            && self.gamma_div >= 0.0
            && self.gamma_pow >= 0.0
            && self.gp_noise >= 0.0)
        {
            return Err(config_err(
                "beta, gamma_div, gamma_pow and gp_noise must be finite and nonnegative",
            ));
        }
        if !(self.alpha.max_value >= 0.0) || !(0.0..=1.0).contains(&self.mix.max_value) {
            return Err(config_err(
                "alpha must be nonnegative and the mixing weight within [0, 1]",
            ));
        }
        if self.gp_max_points == 0 {
            return Err(config_err("gp_max_points must be at least 1"));
        }
        if let Some(q) = self.bo_quantile {
            if !(0.0..=1.0).contains(&q) {
                return Err(config_err("bo_quantile must lie in [0, 1]"));
            }
        }
        self.cerm.validate()?;
        Ok(())
    }
}

/// Telemetry for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    /// Cumulative distinct black-box queries.
    pub queries: usize,
    pub batch: Vec<String>,
    /// Plug-in ΔAUC on the queried set; missing while a group lacks a class.
    pub empirical: Option<f64>,
    pub certificate: Option<Certificate>,
    pub estimate: Option<f64>,
    /// `|estimate − truth|` when the truth is known.
    pub error: Option<f64>,
    /// Seconds spent in the round; filled in by callers that own a clock.
    pub wall_time: Option<f64>,
}

/// Stepwise audit of one `(settings, seed)` pair.
pub struct AuditRun<'a, O, E> {
    pool: &'a AuditPool,
    oracle: O,
    exec: &'a E,
    settings: AuditSettings,
    seed: u64,
    truth: Option<f64>,
    reference: Option<&'a [f64]>,
    queried: QueriedSet,
    round: usize,
    extremal: Option<(Surrogate, Surrogate)>,
    last_width: Option<f64>,
    bo_inputs: Vec<Vec<f64>>,
    bo_targets: Vec<f64>,
    pending_phi: Vec<Vec<f64>>,
    pilot: Option<Vec<f64>>,
    diagnostics: Vec<SelectionScore>,
    finished: bool,
}

impl<'a, O: ScoreOracle, E: Executor> AuditRun<'a, O, E> {
    pub fn new(
        pool: &'a AuditPool,
        oracle: O,
        settings: AuditSettings,
        seed: u64,
        exec: &'a E,
    ) -> Result<Self, HarnessError> {
        settings.validate(pool.len())?;
        if !pool.has_full_strata() {
            return Err(config_err(
                "the seed round needs every (group, label) cell to be non-empty",
            ));
        }
        Ok(AuditRun {
            pool,
            oracle,
            exec,
            settings,
            seed,
            truth: None,
            reference: None,
            queried: QueriedSet::new(),
            round: 0,
            extremal: None,
            last_width: None,
            bo_inputs: Vec::new(),
            bo_targets: Vec::new(),
            pending_phi: Vec::new(),
            pilot: None,
            diagnostics: Vec::new(),
            finished: false,
        })
    }

    /// Ground-truth ΔAUC used for the logged error.
    pub fn with_truth(mut self, truth: f64) -> Self {
        self.truth = Some(truth);
        self
    }

    /// Black-box scores for the whole pool, for [`PowerSource::Oracle`].
    pub fn with_reference_scores(mut self, scores: &'a [f64]) -> Self {
        self.reference = Some(scores);
        self
    }

    pub fn settings(&self) -> &AuditSettings {
        &self.settings
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn queried(&self) -> &QueriedSet {
        &self.queried
    }

    /// Per-candidate scores of the most recent active selection.
    pub fn diagnostics(&self) -> &[SelectionScore] {
        &self.diagnostics
    }

    /// Current `(min, max)` extremal hypotheses.
    pub fn extremal(&self) -> Option<(&Surrogate, &Surrogate)> {
        self.extremal.as_ref().map(|(a, b)| (a, b))
    }

    pub fn oracle(&self) -> &O {
        &self.oracle
    }

    pub fn into_oracle(self) -> O {
        self.oracle
    }

    /// Run one round. Returns `None` once the budget is spent or the run
    /// stopped early.
    pub fn step(&mut self) -> Result<Option<RoundLog>, HarnessError> {
        if self.finished {
            return Ok(None);
        }
        self.diagnostics.clear();
        let batch = if self.round == 0 {
            self.seed_batch()
        } else {
            self.select()?
        };
        self.query(&batch)?;
        if self.round == 0 && self.settings.strategy == Strategy::Power {
            self.fit_pilot()?;
        }

        let cert = if self.settings.strategy.uses_certificate() {
            Some(self.update_certificate()?)
        } else {
            None
        };
        let empirical =
            group_auc_at(self.pool, self.queried.positions(), self.queried.scores()).delta;
        let estimate = match &cert {
            Some(c) => Some(c.midpoint),
            None => empirical,
        };
        let error = match (estimate, self.truth) {
            (Some(e), Some(t)) => Some(libm::fabs(e - t)),
            _ => None,
        };
        let log = RoundLog {
            round: self.round,
            queries: self.queried.len(),
            batch: batch.iter().map(|&p| self.pool.get(p).id.clone()).collect(),
            empirical,
            certificate: cert,
            estimate,
            error,
            wall_time: None,
        };

        self.round += 1;
        let stop_early = match (self.settings.early_stop, &log.certificate) {
            (Some(eps), Some(c)) => c.half_width() <= eps,
            _ => false,
        };
        if self.queried.len() >= self.settings.budget || stop_early {
            self.finished = true;
        }
        Ok(Some(log))
    }

    fn seed_batch(&self) -> Vec<usize> {
        let mut rng = rng_for(self.seed, &[TAG_SEED_ROUND]);
        let mut out = Vec::with_capacity(self.settings.seed_size());
        for s in Stratum::ALL {
            let members = self.pool.stratum_members(s);
            let take = self.settings.seed_multiplier.min(members.len());
            out.extend(
                index::sample(&mut rng, members.len(), take)
                    .into_iter()
                    .map(|i| members[i]),
            );
        }
        out
    }

    fn query(&mut self, batch: &[usize]) -> Result<(), HarnessError> {
        let examples: Vec<_> = batch.iter().map(|&p| self.pool.get(p)).collect();
        let ids: Vec<&str> = examples.iter().map(|e| e.id.as_str()).collect();
        let records = check_response(&ids, self.oracle.score_batch(&examples)?)?;
        self.queried
            .push_round(self.pool, records.iter().map(|r| (r.id.as_str(), r.score)))?;
        Ok(())
    }

    fn round_size(&self) -> usize {
        self.settings
            .batch
            .min(self.settings.budget - self.queried.len())
    }

    fn select(&mut self) -> Result<Vec<usize>, HarnessError> {
        let k = self.round_size();
        let mut rng = rng_for(self.seed, &[TAG_SELECT, self.round as u64]);
        let s = &self.settings;
        let picked = match s.strategy {
            Strategy::Random => select_random(self.pool, &self.queried, k, &mut rng)?,
            Strategy::Stratified | Strategy::CermStratified => {
                select_stratified(self.pool, &self.queried, k, s.stratify_by, &mut rng)?
            }
            Strategy::Power => {
                let p: &[f64] = match s.power_source {
                    PowerSource::Oracle => self.reference.ok_or_else(|| {
                        config_err("oracle power sampling needs the reference scores")
                    })?,
                    PowerSource::Pilot => self
                        .pilot
                        .as_deref()
                        .expect("pilot is fitted in the seed round"),
                };
                select_power(self.pool, &self.queried, k, s.gamma_pow, p, &mut rng)?
            }
            Strategy::BafaDisagreement | Strategy::BafaBo => self.select_active(k)?,
            Strategy::BoOnly => self.select_bo_only(k)?,
        };
        Ok(picked)
    }

    fn candidates(&self) -> Result<Vec<usize>, HarnessError> {
        let free = self.pool.len() - self.queried.len();
        let mut cand = if free <= self.settings.candidates {
            (0..self.pool.len())
                .filter(|&p| !self.queried.contains(p))
                .collect()
        } else {
            let mut rng = rng_for(self.seed, &[TAG_CANDIDATES, self.round as u64]);
            select_random(self.pool, &self.queried, self.settings.candidates, &mut rng)?
        };
        cand.sort_unstable();
        Ok(cand)
    }

    fn fit_bo_gp(
        &self,
        inputs: &[Vec<f64>],
        targets: &[f64],
    ) -> Result<Option<GpModel>, HarnessError> {
        if inputs.is_empty() {
            return Ok(None);
        }
        let from = inputs.len().saturating_sub(self.settings.gp_max_points);
        let (x, y) = (&inputs[from..], &targets[from..]);
        let kernel = Kernel {
            kind: self.settings.kernel,
            lengthscale: median_lengthscale(x),
            signal_variance: 1.0,
        };
        Ok(Some(fit_gp(x, y, kernel, self.settings.gp_noise, true)?))
    }

    fn select_active(&mut self, k: usize) -> Result<Vec<usize>, HarnessError> {
        let cand = self.candidates()?;
        let s = &self.settings;
        let (lo, hi) = self
            .extremal
            .as_ref()
            .expect("certificate computed after every round");
        let xs: Vec<&[f64]> = cand
            .iter()
            .map(|&p| self.pool.get(p).features.as_slice())
            .collect();
        let p_lo: Vec<f64> = xs.iter().map(|x| lo.score(x)).collect();
        let p_hi: Vec<f64> = xs.iter().map(|x| hi.score(x)).collect();
        let dis = disagreement(&p_lo, &p_hi);
        let phi: Vec<Vec<f64>> = cand
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let ex = self.pool.get(p);
                let g = [f64::from(ex.group)];
                let grad = if s.phi_gradient {
                    let (a, b) = (
                        hi.input_gradient(&ex.features),
                        lo.input_gradient(&ex.features),
                    );
                    let diff: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
                    [norm(&diff)]
                } else {
                    [0.0]
                };
                let mut extras: Vec<&[f64]> = Vec::with_capacity(3);
                if s.phi_group {
                    extras.push(&g);
                }
                if s.phi_gradient {
                    extras.push(&grad);
                }
                if s.phi_features {
                    extras.push(&ex.features);
                }
                build_features(dis[i], &extras)
            })
            .collect();

        let t = self.round;
        let weights = distribution_weights(self.pool, &self.queried, s.alpha.value(t), s.ratio_cap);
        let bo = if s.strategy == Strategy::BafaBo {
            let gp = self.fit_bo_gp(&self.bo_inputs, &self.bo_targets)?;
            Some(bo_combine(
                &dis,
                gp.as_ref(),
                &phi,
                s.beta,
                &s.mix,
                t,
                s.bo_quantile,
            )?)
        } else {
            None
        };
        let dist_w: Vec<f64> = cand
            .iter()
            .map(|&p| weights[self.pool.get(p).stratum().index()])
            .collect();
        let final_scores: Vec<f64> = (0..cand.len())
            .map(|i| {
                let comb = bo.as_ref().map_or(dis[i], |b| b[i].combined);
                comb * dist_w[i]
            })
            .collect();
        let ids: Vec<&str> = cand.iter().map(|&p| self.pool.get(p).id.as_str()).collect();
        let picks = if s.gamma_div > 0.0 {
            mmr_select(&final_scores, &phi, &ids, k, s.gamma_div)?
        } else {
            top_k(&final_scores, &ids, k)?
        };

        let mut selected = vec![false; cand.len()];
        for &i in &picks {
            selected[i] = true;
        }
        self.diagnostics = (0..cand.len())
            .map(|i| SelectionScore {
                id: String::from(ids[i]),
                base: dis[i],
                acq01: bo.as_ref().and_then(|b| b[i].acq01),
                mix_weight: bo.as_ref().map_or(0.0, |b| b[i].mix_weight),
                dist_weight: dist_w[i],
                final_score: final_scores[i],
                phi: phi[i].clone(),
                selected: selected[i],
            })
            .collect();
        self.pending_phi = picks.iter().map(|&i| phi[i].clone()).collect();
        Ok(picks.into_iter().map(|i| cand[i]).collect())
    }

    fn bo_only_features(&self, pos: usize) -> Vec<f64> {
        let ex = self.pool.get(pos);
        build_features(f64::from(ex.group), &[&ex.features])
    }

    fn select_bo_only(&mut self, k: usize) -> Result<Vec<usize>, HarnessError> {
        let cand = self.candidates()?;
        let inputs: Vec<Vec<f64>> = self
            .queried
            .positions()
            .iter()
            .map(|&p| self.bo_only_features(p))
            .collect();
        let targets: Vec<f64> = self
            .queried
            .scores()
            .iter()
            .map(|s| s * (1.0 - s))
            .collect();
        let gp = self
            .fit_bo_gp(&inputs, &targets)?
            .ok_or(SelectionError::UnfittedGp)?;
        let phi: Vec<Vec<f64>> = cand.iter().map(|&p| self.bo_only_features(p)).collect();
        let (mean, var) = gp.predict(&phi)?;
        let acq: Vec<f64> = mean
            .iter()
            .zip(&var)
            .map(|(m, v)| m + self.settings.beta * libm::sqrt(*v))
            .collect();
        let ids: Vec<&str> = cand.iter().map(|&p| self.pool.get(p).id.as_str()).collect();
        let picks = top_k(&acq, &ids, k)?;
        let mut selected = vec![false; cand.len()];
        for &i in &picks {
            selected[i] = true;
        }
        self.diagnostics = (0..cand.len())
            .map(|i| SelectionScore {
                id: String::from(ids[i]),
                base: acq[i],
                acq01: None,
                mix_weight: 0.0,
                dist_weight: 1.0,
                final_score: acq[i],
                phi: phi[i].clone(),
                selected: selected[i],
            })
            .collect();
        Ok(picks.into_iter().map(|i| cand[i]).collect())
    }

    fn init_pair(&self) -> Result<(Surrogate, Surrogate), HarnessError> {
        let arch = self.settings.architecture;
        let d = self.pool.dim();
        Ok((
            init_surrogate(d, arch, mix64(self.seed ^ TAG_INIT))?,
            init_surrogate(d, arch, mix64(self.seed ^ TAG_INIT ^ 1))?,
        ))
    }

    fn update_certificate(&mut self) -> Result<Certificate, HarnessError> {
        let warm = match self.extremal.take() {
            Some(pair) => pair,
            None => self.init_pair()?,
        };
        let (cert, lo, hi) = certificate(
            &self.queried,
            self.pool,
            &self.settings.cerm,
            (&warm.0, &warm.1),
            self.round,
            self.seed,
            self.exec,
        )?;
        self.extremal = Some((lo.surrogate, hi.surrogate));

        if !self.pending_phi.is_empty() {
            if let Some(prev) = self.last_width {
                let gain = (prev - cert.width) / self.pending_phi.len() as f64;
                for phi in self.pending_phi.drain(..) {
                    self.bo_inputs.push(phi);
                    self.bo_targets.push(gain);
                }
            }
            self.pending_phi.clear();
        }
        self.last_width = Some(cert.width);
        Ok(cert)
    }

    /// Least-squares fit of a fresh surrogate to the queried scores; the
    /// resulting pool scores drive pilot power sampling.
    fn fit_pilot(&mut self) -> Result<(), HarnessError> {
        let mut h = init_surrogate(
            self.pool.dim(),
            self.settings.architecture,
            mix64(self.seed ^ TAG_INIT ^ 2),
        )?;
        let xs: Vec<&[f64]> = self
            .queried
            .positions()
            .iter()
            .map(|&p| self.pool.get(p).features.as_slice())
            .collect();
        let ys = self.queried.scores();
        let mut adam = Adam::new(h.params().len());
        let mut grad = vec![0.0; h.params().len()];
        for _ in 0..self.settings.pilot_steps {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (x, &y) in xs.iter().zip(ys) {
                let r = h.score(x) - y;
                h.backward(x, 2.0 * r / xs.len() as f64, &mut grad);
            }
            adam.step(h.params_mut(), &grad, 0.05, &[]);
        }
        self.pilot = Some(
            self.pool
                .examples()
                .iter()
                .map(|e| h.score(&e.features))
                .collect(),
        );
        Ok(())
    }
}

/// Run a full audit and collect every round's log.
pub fn run_audit<O: ScoreOracle, E: Executor>(
    pool: &AuditPool,
    oracle: O,
    settings: &AuditSettings,
    seed: u64,
    truth: Option<f64>,
    exec: &E,
) -> Result<Vec<RoundLog>, HarnessError> {
    let mut run = AuditRun::new(pool, oracle, settings.clone(), seed, exec)?;
    if let Some(t) = truth {
        run = run.with_truth(t);
    }
    let mut logs = Vec::new();
    while let Some(log) = run.step()? {
        logs.push(log);
    }
    Ok(logs)
}
