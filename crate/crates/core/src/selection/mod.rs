//! Query-selection rules: passive baselines and the certificate-driven active
//! rules with their regularisers.
//!
//! Candidates are addressed by pool position. Every rule only ever returns
//! positions that are not yet in the queried set, without repeats.

mod active;
mod passive;

pub use active::{
    bo_combine, build_features, disagreement, distribution_weights, mmr_select, score_disagreement,
    top_k, BoScore,
};
pub use passive::{apportion, select_power, select_random, select_stratified, stratified_quotas};

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::GpError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("requested {requested} candidates but only {available} remain")]
    PoolExhausted { requested: usize, available: usize },
    #[error("no score for id {0:?}")]
    MissingScore(String),
    #[error("GP acquisition requested before any BO data was observed")]
    UnfittedGp,
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("invalid setting: {0}")]
    InvalidSetting(&'static str),
}

/// Warm-up-then-linear-ramp weight: zero for `t < warmup`, then
/// `max · min(1, (t − warmup + 1)/ramp)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub warmup_rounds: usize,
    pub ramp_rounds: usize,
    pub max_value: f64,
}

impl Schedule {
    pub const OFF: Schedule = Schedule {
        warmup_rounds: 0,
        ramp_rounds: 0,
        max_value: 0.0,
    };

    pub fn value(&self, t: usize) -> f64 {
        if t < self.warmup_rounds {
            return 0.0;
        }
        if self.ramp_rounds == 0 {
            return self.max_value;
        }
        let frac = (t - self.warmup_rounds + 1) as f64 / self.ramp_rounds as f64;
        self.max_value * frac.min(1.0)
    }
}

/// Per-candidate breakdown of the final selection score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionScore {
    pub id: String,
    /// Raw informativeness (disagreement).
    pub base: f64,
    /// Squashed acquisition in `[0, 1]`; BO rules only.
    pub acq01: Option<f64>,
    pub mix_weight: f64,
    pub dist_weight: f64,
    pub final_score: f64,
    pub phi: Vec<f64>,
    pub selected: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let s = Schedule {
            warmup_rounds: 3,
            ramp_rounds: 5,
            max_value: 0.5,
        };
        assert_eq!(s.value(0), 0.0);
        assert_eq!(s.value(2), 0.0);
        assert!((s.value(3) - 0.1).abs() < 1e-15);
        assert!((s.value(5) - 0.3).abs() < 1e-15);
        assert_eq!(s.value(7), 0.5);
        assert_eq!(s.value(100), 0.5);
        assert_eq!(Schedule::OFF.value(10), 0.0);
    }
}
