//! Builds pools and scorers from a config, runs `(strategy, seed)` jobs in
//! parallel and writes their outputs.
//!
//! Output layout under the output directory:
//!
//! ```text
//! summary.csv                        one row per strategy
//! budget_errors.csv                  mean/SD error at fixed budgets
//! plot_data.csv                      strategy,seed,q,error,width
//! logs/<strategy>/seed<n>.csv        per-round log
//! logs/<strategy>/seed<n>.timing.csv per-round wall time
//! snapshots/<strategy>/seed<n>_{min,max}.txt
//! diagnostics/<strategy>/seed<n>/round<r>.csv
//! ```

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use fairaudit_core::blackbox::make_planted_bias_scorer;
use fairaudit_core::harness::{
    generate_synthetic_pool, summarize, ExperimentSummary, SummarySettings,
};
use fairaudit_core::metrics::pool_group_auc;
use fairaudit_core::selection::SelectionScore;
use fairaudit_core::{
    AuditPool, AuditRun, AuditSettings, PlantedBiasConfig, RoundLog, Strategy, Surrogate,
};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, PoolSource, ScorerSource};
use crate::exec::Rayon;
use crate::formats::{self, FormatError, PoolFormat};
use crate::remote::RemoteScorer;
use crate::scoring::{BatchOf, CacheClient, SharedCache, TableScorer};
use crate::AppError;

/// A pool with its (shared, cached) scorer and whatever is known about the
/// true gap.
pub struct Prepared {
    pub pool: AuditPool,
    pub cache: Arc<SharedCache>,
    pub truth: Option<f64>,
    /// Black-box scores of the whole pool, when they are free to compute.
    pub reference: Option<Vec<f64>>,
}

fn missing_input(path: &Path) -> impl FnOnce(FormatError) -> AppError + '_ {
    move |e| match e {
        FormatError::Io { source, .. } if source.kind() == ErrorKind::NotFound => {
            AppError::Config(format!("input file {} not found", path.display()))
        }
        other => AppError::Format(other),
    }
}

fn read_scorer_config(path: &Path) -> Result<PlantedBiasConfig, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
}

fn delta_of(pool: &AuditPool, scores: &[f64]) -> Option<f64> {
    pool_group_auc(pool, scores).delta
}

impl Prepared {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, AppError> {
        cfg.validate()?;
        let (pool, synthetic) = match &cfg.pool {
            PoolSource::Synthetic(spec) => {
                let syn = generate_synthetic_pool(spec)?;
                (syn.pool.clone(), Some(syn))
            }
            PoolSource::File { path, format } => {
                let format = format.unwrap_or_else(|| PoolFormat::from_path(path));
                (
                    formats::load_pool(path, format).map_err(missing_input(path))?,
                    None,
                )
            }
        };
        let persisted = match &cfg.score_cache {
            Some(p) if p.exists() => formats::load_score_cache(p)?,
            _ => BTreeMap::new(),
        };
        let (cache, computed, reference) = match &cfg.scorer {
            ScorerSource::Planted { path } => {
                let config = match (path, &synthetic) {
                    (Some(p), _) => read_scorer_config(p)?,
                    (None, Some(syn)) => syn.scorer.clone(),
                    (None, None) => unreachable!("rejected by validate"),
                };
                let scorer = make_planted_bias_scorer(config)
                    .map_err(|e| AppError::Config(e.to_string()))?;
                let scores = scorer
                    .score_pool(&pool)
                    .map_err(|e| AppError::Config(e.to_string()))?;
                let truth = delta_of(&pool, &scores);
                (
                    SharedCache::with_scores(BatchOf(scorer), persisted),
                    truth,
                    Some(scores),
                )
            }
            ScorerSource::Remote(settings) => (
                SharedCache::with_scores(RemoteScorer::new(settings.clone())?, persisted),
                None,
                None,
            ),
            ScorerSource::Cached { path } => {
                let table = formats::load_score_cache(path).map_err(missing_input(path))?;
                let full: Option<Vec<f64>> = pool
                    .examples()
                    .iter()
                    .map(|e| table.get(&e.id).copied())
                    .collect();
                let truth = full.as_deref().and_then(|s| delta_of(&pool, s));
                (
                    SharedCache::with_scores(TableScorer::new(table), persisted),
                    truth,
                    full,
                )
            }
        };
        Ok(Prepared {
            pool,
            cache,
            truth: cfg.truth.or(computed),
            reference,
        })
    }
}

#[derive(Debug, Clone)]
pub struct JobOutput {
    pub strategy: Strategy,
    pub seed: u64,
    pub logs: Vec<RoundLog>,
    /// Distinct ids this run asked the scorer for.
    pub distinct_requests: usize,
    pub extremal: Option<(Surrogate, Surrogate)>,
    /// `(round, candidate scores)` when diagnostics were requested.
    pub diagnostics: Vec<(usize, Vec<SelectionScore>)>,
}

/// One audit with wall-clock timing and a query-accounting check.
pub fn run_job(
    prep: &Prepared,
    settings: &AuditSettings,
    strategy: Strategy,
    seed: u64,
    keep_diagnostics: bool,
) -> Result<JobOutput, AppError> {
    let settings = AuditSettings {
        strategy,
        ..settings.clone()
    };
    let mut run = AuditRun::new(
        &prep.pool,
        CacheClient::new(Arc::clone(&prep.cache)),
        settings,
        seed,
        &Rayon,
    )?;
    if let Some(t) = prep.truth {
        run = run.with_truth(t);
    }
    if let Some(r) = &prep.reference {
        run = run.with_reference_scores(r);
    }
    let mut logs = Vec::new();
    let mut diagnostics = Vec::new();
    loop {
        let start = Instant::now();
        let Some(mut log) = run.step()? else { break };
        log.wall_time = Some(start.elapsed().as_secs_f64());
        if keep_diagnostics && !run.diagnostics().is_empty() {
            diagnostics.push((log.round, run.diagnostics().to_vec()));
        }
        logs.push(log);
    }
    let extremal = run.extremal().map(|(a, b)| (a.clone(), b.clone()));
    let distinct_requests = run.oracle().distinct_requests();
    let reported = logs.last().map_or(0, |l| l.queries);
    if distinct_requests != reported {
        return Err(AppError::Accounting {
            strategy: strategy.to_string(),
            seed,
            requested: distinct_requests,
            reported,
        });
    }
    Ok(JobOutput {
        strategy,
        seed,
        logs,
        distinct_requests,
        extremal,
        diagnostics,
    })
}

/// Every `(strategy, seed)` pair, in parallel. Results come back in
/// strategy-major order.
pub fn run_matrix(
    prep: &Prepared,
    settings: &AuditSettings,
    strategies: &[Strategy],
    seeds: &[u64],
    keep_diagnostics: bool,
) -> Result<Vec<JobOutput>, AppError> {
    let jobs: Vec<(Strategy, u64)> = strategies
        .iter()
        .flat_map(|&st| seeds.iter().map(move |&s| (st, s)))
        .collect();
    jobs.par_iter()
        .map(|&(st, s)| run_job(prep, settings, st, s, keep_diagnostics))
        .collect()
}

pub fn summaries(
    jobs: &[JobOutput],
    truth: Option<f64>,
    settings: &SummarySettings,
) -> Vec<ExperimentSummary> {
    let mut by_strategy: BTreeMap<Strategy, Vec<(u64, &[RoundLog])>> = BTreeMap::new();
    for j in jobs {
        by_strategy
            .entry(j.strategy)
            .or_default()
            .push((j.seed, &j.logs));
    }
    // Keep the order in which strategies first appear.
    let mut order: Vec<Strategy> = Vec::new();
    for j in jobs {
        if !order.contains(&j.strategy) {
            order.push(j.strategy);
        }
    }
    order
        .iter()
        .map(|st| summarize(*st, &by_strategy[st], truth, settings))
        .collect()
}

pub fn log_path(dir: &Path, strategy: Strategy, seed: u64) -> PathBuf {
    dir.join("logs")
        .join(strategy.name())
        .join(format!("seed{seed}.csv"))
}

/// Writes everything listed in the module docs.
pub fn write_outputs(
    dir: &Path,
    jobs: &[JobOutput],
    summaries: &[ExperimentSummary],
    snapshots: bool,
) -> Result<(), AppError> {
    let mut plot = Vec::new();
    for j in jobs {
        let log = log_path(dir, j.strategy, j.seed);
        formats::write_round_logs(&j.logs, formats::create_file(&log)?)?;
        formats::write_timing(
            &j.logs,
            formats::create_file(&log.with_extension("timing.csv"))?,
        )?;
        if let (true, Some((lo, hi))) = (snapshots, &j.extremal) {
            let base = dir.join("snapshots").join(j.strategy.name());
            std::fs::create_dir_all(&base).map_err(|e| FormatError::Io {
                path: base.display().to_string(),
                source: e,
            })?;
            formats::save_snapshot(lo, &base.join(format!("seed{}_min.txt", j.seed)))?;
            formats::save_snapshot(hi, &base.join(format!("seed{}_max.txt", j.seed)))?;
        }
        for (round, scores) in &j.diagnostics {
            let path = dir
                .join("diagnostics")
                .join(j.strategy.name())
                .join(format!("seed{}", j.seed))
                .join(format!("round{round:04}.csv"));
            formats::write_diagnostics(scores, formats::create_file(&path)?)?;
        }
        plot.extend(j.logs.iter().map(|l| formats::PlotRow {
            strategy: j.strategy.to_string(),
            seed: j.seed,
            q: l.queries,
            error: l.error,
            width: l.certificate.as_ref().map(|c| c.width),
        }));
    }
    formats::write_summary(summaries, formats::create_file(&dir.join("summary.csv"))?)?;
    formats::write_budget_errors(
        summaries,
        formats::create_file(&dir.join("budget_errors.csv"))?,
    )?;
    formats::write_plot_rows(&plot, formats::create_file(&dir.join("plot_data.csv"))?)?;
    Ok(())
}

/// Load, run, summarise and write. Returns the summaries.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    strategies: &[Strategy],
) -> Result<Vec<ExperimentSummary>, AppError> {
    let prep = Prepared::from_config(cfg)?;
    let seeds = cfg.seeds.to_vec();
    let summary_settings = cfg.summary_settings();
    let jobs = run_matrix(&prep, &cfg.audit, strategies, &seeds, cfg.diagnostics)?;
    let sums = summaries(&jobs, prep.truth, &summary_settings);
    write_outputs(&cfg.output_dir, &jobs, &sums, cfg.snapshots)?;
    if let Some(p) = &cfg.score_cache {
        formats::save_score_cache(&prep.cache.scores(), p)?;
    }
    Ok(sums)
}

/// Tidy rows from every `logs/<strategy>/seed<n>.csv` under `dir`, sorted by
/// strategy then seed.
pub fn collect_plot_rows(dir: &Path) -> Result<Vec<formats::PlotRow>, AppError> {
    let logs = dir.join("logs");
    let mut found: Vec<(String, u64, PathBuf)> = Vec::new();
    let read_dir = |p: &Path| {
        std::fs::read_dir(p)
            .map_err(|e| AppError::Config(format!("cannot read {}: {e}", p.display())))
    };
    for strategy in read_dir(&logs)? {
        let strategy = strategy.map_err(|e| AppError::Config(e.to_string()))?;
        if !strategy.path().is_dir() {
            continue;
        }
        let name = strategy.file_name().to_string_lossy().into_owned();
        for file in read_dir(&strategy.path())? {
            let path = file.map_err(|e| AppError::Config(e.to_string()))?.path();
            let fname = path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default();
            let seed = fname
                .strip_prefix("seed")
                .and_then(|s| s.strip_suffix(".csv"))
                .and_then(|s| s.parse().ok());
            if let Some(seed) = seed {
                found.push((name.clone(), seed, path));
            }
        }
    }
    found.sort();
    let mut rows = Vec::new();
    for (name, seed, path) in found {
        let logged = formats::read_round_logs(formats::open_file(&path)?)?;
        rows.extend(formats::plot_rows(&name, seed, &logged));
    }
    Ok(rows)
}
