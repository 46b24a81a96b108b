//! Black-box scorers: the planted-bias synthetic scorer, a per-id score cache
//! and the response checks shared by remote clients.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{dot, rng_for_id, sigmoid};
use crate::pool::{AuditExample, AuditPool, PoolError};

const NOISE_SALT: u64 = 0x006e_6f69_7365;
const FLIP_SALT: u64 = 0x666c_6970;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlackBoxError {
    #[error("scorer expects dimension {expected}, example has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("remote protocol error: {0}")]
    RemoteProtocol(String),
    #[error("remote scorer timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
}

/// A black-box score `s* = h*(x)` for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub score: f64,
}

/// Anything that can be queried for scores of a batch of examples.
///
/// Implementations return one record per input in input order.
pub trait ScoreOracle {
    fn score_batch(
        &mut self,
        examples: &[&AuditExample],
    ) -> Result<Vec<ScoreRecord>, BlackBoxError>;
}

impl<T: ScoreOracle + ?Sized> ScoreOracle for &mut T {
    fn score_batch(
        &mut self,
        examples: &[&AuditExample],
    ) -> Result<Vec<ScoreRecord>, BlackBoxError> {
        (**self).score_batch(examples)
    }
}

/// A deterministic per-example scorer (no IO, no state).
pub trait BlackBox {
    fn score_one(&self, example: &AuditExample) -> Result<f64, BlackBoxError>;
}

/// Where the planted group-conditional corruption acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    /// Flip the pool's ground-truth label of selected examples. The scorer
    /// itself stays a clean sigmoid-linear function of the features.
    #[default]
    Labels,
    /// Replace the score `s` of selected examples by `1 − s`.
    Scores,
}

/// Synthetic scorer with a seeded group-conditional corruption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBiasConfig {
    pub base_weights: Vec<f64>,
    #[serde(default)]
    pub bias: f64,
    pub flip_prob_group0: f64,
    pub flip_prob_group1: f64,
    #[serde(default)]
    pub noise_scale: f64,
    pub seed: u64,
    #[serde(default)]
    pub corruption: Corruption,
}

impl PlantedBiasConfig {
    pub fn validate(&self) -> Result<(), BlackBoxError> {
        for p in [self.flip_prob_group0, self.flip_prob_group1] {
            if !(0.0..=1.0).contains(&p) {
                return Err(BlackBoxError::InvalidProbability(p));
            }
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(BlackBoxError::InvalidProbability(self.noise_scale));
        }
        Ok(())
    }

    pub fn flip_prob(&self, group: u8) -> f64 {
        if group == 0 {
            self.flip_prob_group0
        } else {
            self.flip_prob_group1
        }
    }

    /// Whether the corruption hits this example. Keyed by `(seed, id)` only,
    /// so raising a flip probability only ever adds flipped ids.
    pub fn is_flipped(&self, example: &AuditExample) -> bool {
        let u: f64 = rng_for_id(self.seed, FLIP_SALT, &example.id).random();
        u < self.flip_prob(example.group)
    }

    /// Per-id logit noise `η ~ N(0, noise_scale²)`.
    pub fn noise(&self, id: &str) -> f64 {
        if self.noise_scale == 0.0 {
            return 0.0;
        }
        let z: f64 = rng_for_id(self.seed, NOISE_SALT, id).sample(StandardNormal);
        self.noise_scale * z
    }

    /// Apply label corruption to a pool. Identity for [`Corruption::Scores`].
    pub fn corrupt_labels(&self, pool: &AuditPool) -> Result<AuditPool, PoolError> {
        if self.corruption != Corruption::Labels {
            return Ok(pool.clone());
        }
        let labels: Vec<u8> = pool
            .examples()
            .iter()
            .map(|ex| {
                if self.is_flipped(ex) {
                    1 - ex.label
                } else {
                    ex.label
                }
            })
            .collect();
        pool.with_labels(&labels)
    }
}

/// `s(x) = σ(w·x + b + η_id)`, optionally mirrored to `1 − s` for flipped ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedBiasScorer {
    config: PlantedBiasConfig,
}

pub fn make_planted_bias_scorer(
    config: PlantedBiasConfig,
) -> Result<PlantedBiasScorer, BlackBoxError> {
    config.validate()?;
    Ok(PlantedBiasScorer { config })
}

impl PlantedBiasScorer {
    pub fn config(&self) -> &PlantedBiasConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.base_weights.len()
    }

    /// Scores of every pool example, in pool order.
    pub fn score_pool(&self, pool: &AuditPool) -> Result<Vec<f64>, BlackBoxError> {
        pool.examples()
            .iter()
            .map(|ex| self.score_one(ex))
            .collect()
    }
}

impl BlackBox for PlantedBiasScorer {
    fn score_one(&self, ex: &AuditExample) -> Result<f64, BlackBoxError> {
        let c = &self.config;
        if ex.features.len() != c.base_weights.len() {
            return Err(BlackBoxError::DimensionMismatch {
                expected: c.base_weights.len(),
                found: ex.features.len(),
            });
        }
        let s = sigmoid(dot(&c.base_weights, &ex.features) + c.bias + c.noise(&ex.id));
        if c.corruption == Corruption::Scores && c.is_flipped(ex) {
            Ok(1.0 - s)
        } else {
            Ok(s)
        }
    }
}

/// Wraps a deterministic [`BlackBox`] with an id-keyed cache. An id reaches the
/// inner scorer at most once.
#[derive(Debug, Clone)]
pub struct CachedScorer<B> {
    inner: B,
    cache: BTreeMap<String, f64>,
    sent: usize,
}

impl<B: BlackBox> CachedScorer<B> {
    pub fn new(inner: B) -> Self {
        CachedScorer {
            inner,
            cache: BTreeMap::new(),
            sent: 0,
        }
    }

    /// Number of distinct ids forwarded to the inner scorer.
    pub fn distinct_queries(&self) -> usize {
        self.sent
    }

    pub fn cached(&self, id: &str) -> Option<f64> {
        self.cache.get(id).copied()
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: BlackBox> ScoreOracle for CachedScorer<B> {
    fn score_batch(
        &mut self,
        examples: &[&AuditExample],
    ) -> Result<Vec<ScoreRecord>, BlackBoxError> {
        let mut out = Vec::with_capacity(examples.len());
        for ex in examples {
            let score = match self.cache.get(&ex.id) {
                Some(&s) => s,
                None => {
                    let s = self.inner.score_one(ex)?;
                    check_score(&ex.id, s)?;
                    self.cache.insert(ex.id.clone(), s);
                    self.sent += 1;
                    s
                }
            };
            out.push(ScoreRecord {
                id: ex.id.clone(),
                score,
            });
        }
        Ok(out)
    }
}

fn check_score(id: &str, s: f64) -> Result<(), BlackBoxError> {
    if s.is_finite() && (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(BlackBoxError::RemoteProtocol(alloc::format!(
            "out-of-range score {s} for id {id:?}"
        )))
    }
}

/// Check a scorer response against the requested ids and reorder it to
/// request order. Every requested id must appear exactly once, no other id may
/// appear, and each score must be finite and within `[0, 1]`.
pub fn check_response(
    requested: &[&str],
    records: Vec<ScoreRecord>,
) -> Result<Vec<ScoreRecord>, BlackBoxError> {
    let wanted: BTreeSet<&str> = requested.iter().copied().collect();
    let mut got: BTreeMap<String, f64> = BTreeMap::new();
    let mut extra = Vec::new();
    let mut dup = Vec::new();
    for r in records {
        if !wanted.contains(r.id.as_str()) {
            extra.push(r.id);
            continue;
        }
        check_score(&r.id, r.score)?;
        if got.insert(r.id.clone(), r.score).is_some() {
            dup.push(r.id);
        }
    }
    let missing: Vec<&str> = requested
        .iter()
        .copied()
        .filter(|id| !got.contains_key(*id))
        .collect();
    if !missing.is_empty() || !extra.is_empty() || !dup.is_empty() {
        let mut msg = String::new();
        if !missing.is_empty() {
            msg.push_str(&alloc::format!("missing ids {missing:?}"));
        }
        if !extra.is_empty() {
            if !msg.is_empty() {
                msg.push_str("; ");
            }
            msg.push_str(&alloc::format!("extra ids {extra:?}"));
        }
        if !dup.is_empty() {
            if !msg.is_empty() {
                msg.push_str("; ");
            }
            msg.push_str(&alloc::format!("duplicate ids {dup:?}"));
        }
        return Err(BlackBoxError::RemoteProtocol(msg));
    }
    Ok(requested
        .iter()
        .map(|id| ScoreRecord {
            id: id.to_string(),
            score: got[*id],
        })
        .collect())
}
