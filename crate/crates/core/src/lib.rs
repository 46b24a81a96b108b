//! Core algorithms for query-efficient black-box fairness auditing.
//!
//! The auditor owns a fixed pool of labelled examples split into two protected
//! groups and may query an opaque scorer for one score per example. The target
//! is the ranking-fairness gap
//!
//! ```text
//! ΔAUC = AUC(group 0) − AUC(group 1)
//! ```
//!
//! [`cerm`] maintains two extremal surrogate hypotheses inside the λ-version
//! space of the queried scores and turns them into a certificate interval
//! `[mu_min, mu_max]`. [`selection`] ranks unqueried candidates by how much the
//! two extremal hypotheses disagree (optionally mixed with a GP/UCB signal from
//! [`gp`]), and [`harness`] drives the audit loop, the passive baselines and the
//! synthetic planted-bias benchmark.
//!
//! This crate is `no_std` (it needs `alloc`). File formats, the remote scorer
//! client and the command line live in the `fairaudit` crate.

#![no_std]
// `!(x > 0.0)` style checks are how NaN gets rejected here.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod blackbox;
pub mod cerm;
pub mod exec;
pub mod gp;
pub mod harness;
pub mod math;
pub mod metrics;
pub mod pool;
pub mod selection;
pub mod surrogate;

pub use blackbox::{BlackBoxError, PlantedBiasConfig, PlantedBiasScorer, ScoreOracle, ScoreRecord};
pub use cerm::{CermSettings, Certificate, QueriedSet};
pub use exec::{Executor, Sequential};
pub use harness::{AuditRun, AuditSettings, RoundLog, Strategy};
pub use metrics::GroupAucResult;
pub use pool::{AuditExample, AuditPool, PoolError, Stratum, StratumKeys};
pub use surrogate::{Architecture, Surrogate};
