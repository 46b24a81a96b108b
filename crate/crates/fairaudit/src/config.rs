//! TOML experiment configuration.
//!
//! ```toml
//! seeds = 10                      # or an explicit list: [0, 1, 7]
//! strategies = ["bafa_disagreement", "stratified"]
//! output_dir = "out"
//! score_cache = "scores.cache.csv" # optional sidecar, read if present and rewritten
//!
//! [pool]
//! kind = "file"                   # or "synthetic" plus generator fields
//! path = "pool.csv"
//!
//! [scorer]
//! kind = "planted"                # "remote" (url, timeout_secs, ...) or "cached" (path)
//! path = "scorer.json"
//!
//! [audit]
//! budget = 600
//! batch = 16
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use fairaudit_core::harness::{SummarySettings, SyntheticSpec};
use fairaudit_core::{AuditSettings, Strategy};
use serde::Deserialize;

use crate::formats::PoolFormat;
use crate::remote::RemoteSettings;
use crate::AppError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoolSource {
    Synthetic(SyntheticSpec),
    File {
        path: PathBuf,
        /// Guessed from the extension when absent.
        #[serde(default)]
        format: Option<PoolFormat>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerSource {
    /// A planted-bias scorer. `path` points at its JSON config; it may be
    /// omitted for a synthetic pool, which brings its own scorer.
    Planted {
        #[serde(default)]
        path: Option<PathBuf>,
    },
    Remote(RemoteSettings),
    /// Scores served from an `id,score` CSV.
    Cached {
        path: PathBuf,
    },
}

impl Default for ScorerSource {
    fn default() -> Self {
        ScorerSource::Planted { path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Count(1)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pool: PoolSource,
    #[serde(default)]
    pub scorer: ScorerSource,
    #[serde(default)]
    pub audit: AuditSettings,
    /// Defaults to an AUEC horizon equal to the budget.
    #[serde(default)]
    pub summary: Option<SummarySettings>,
    #[serde(default)]
    pub seeds: Seeds,
    /// Strategies for `compare`; all of them when empty.
    #[serde(default)]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Overrides the truth computed from a planted or fully cached scorer.
    #[serde(default)]
    pub truth: Option<f64>,
    #[serde(default)]
    pub score_cache: Option<PathBuf>,
    /// Write per-round candidate diagnostics.
    #[serde(default)]
    pub diagnostics: bool,
    /// Write the final extremal surrogates of certificate runs.
    #[serde(default = "yes")]
    pub snapshots: bool,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, AppError> {
        toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let PoolSource::File { path, .. } = &mut self.pool {
            fix(path);
        }
        match &mut self.scorer {
            ScorerSource::Planted { path: Some(p) } | ScorerSource::Cached { path: p } => fix(p),
            _ => {}
        }
        if let Some(p) = &mut self.score_cache {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn summary_settings(&self) -> SummarySettings {
        self.summary.clone().unwrap_or_else(|| {
            let budget = self.audit.budget;
            let mut budgets: Vec<usize> = SummarySettings::default()
                .budgets
                .into_iter()
                .filter(|&b| b < budget)
                .collect();
            budgets.push(budget);
            SummarySettings {
                auec_horizon: budget,
                budgets,
                ..SummarySettings::default()
            }
        })
    }

    pub fn compare_strategies(&self) -> Vec<Strategy> {
        if self.strategies.is_empty() {
            Strategy::ALL.to_vec()
        } else {
            self.strategies.clone()
        }
    }

    pub fn validate(&self) -> Result<(), AppError> {
        if self.seeds.to_vec().is_empty() {
            return Err(AppError::Config("at least one seed is required".into()));
        }
        if let Some(t) = self.truth {
            if !(-1.0..=1.0).contains(&t) {
                return Err(AppError::Config(format!("truth {t} outside [-1, 1]")));
            }
        }
        if matches!(self.scorer, ScorerSource::Planted { path: None })
            && !matches!(self.pool, PoolSource::Synthetic(_))
        {
            return Err(AppError::Config(
                "a planted scorer on a file pool needs scorer.path".into(),
            ));
        }
        Ok(())
    }
}
