use std::collections::BTreeSet;

use fairaudit_core::blackbox::{
    make_planted_bias_scorer, BlackBox, CachedScorer, PlantedBiasScorer,
};
use fairaudit_core::harness::{
    generate_synthetic_pool, run_audit, summarize, AuditRun, HarnessError, PowerSource,
    SummarySettings, SyntheticPool, SyntheticSpec,
};
use fairaudit_core::metrics::pool_group_auc;
use fairaudit_core::selection::Schedule;
use fairaudit_core::{
    AuditExample, AuditSettings, BlackBoxError, ScoreOracle, ScoreRecord, Sequential, Strategy,
};

/// Records every id it is asked for and fails on a repeat.
struct Recording {
    inner: PlantedBiasScorer,
    seen: BTreeSet<String>,
}

impl ScoreOracle for Recording {
    fn score_batch(
        &mut self,
        examples: &[&AuditExample],
    ) -> Result<Vec<ScoreRecord>, BlackBoxError> {
        examples
            .iter()
            .map(|e| {
                assert!(self.seen.insert(e.id.clone()), "id {} queried twice", e.id);
                Ok(ScoreRecord {
                    id: e.id.clone(),
                    score: self.inner.score_one(e)?,
                })
            })
            .collect()
    }
}

fn small_benchmark() -> SyntheticPool {
    generate_synthetic_pool(&SyntheticSpec {
        n: 600,
        dim: 8,
        seed: 3,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn settings(strategy: Strategy, budget: usize) -> AuditSettings {
    let mut s = AuditSettings {
        strategy,
        budget,
        candidates: 300,
        ..AuditSettings::default()
    };
    s.cerm.epochs = 3;
    s.cerm.steps_per_epoch = 20;
    s.cerm.eval_size = 256;
    s.cerm.batch = 128;
    s
}

#[test]
fn every_strategy_accounts_for_each_query() {
    let syn = small_benchmark();
    for strategy in Strategy::ALL {
        let mut oracle = Recording {
            inner: make_planted_bias_scorer(syn.scorer.clone()).unwrap(),
            seen: BTreeSet::new(),
        };
        let logs = run_audit(
            &syn.pool,
            &mut oracle,
            &settings(strategy, 60),
            1,
            Some(syn.truth),
            &Sequential,
        )
        .unwrap();
        let last = logs.last().unwrap();
        assert_eq!(last.queries, 60, "{strategy}");
        assert_eq!(oracle.seen.len(), last.queries, "{strategy}");
        let logged: BTreeSet<&str> = logs
            .iter()
            .flat_map(|l| l.batch.iter().map(String::as_str))
            .collect();
        assert_eq!(logged.len(), 60);
        assert_eq!(logs[0].batch.len(), 4);
        assert!(logs
            .windows(2)
            .all(|w| w[1].queries - w[0].queries == w[1].batch.len()));
        assert_eq!(strategy.uses_certificate(), last.certificate.is_some());
        if let Some(c) = &last.certificate {
            assert_eq!(last.estimate, Some(c.midpoint));
        } else {
            assert_eq!(last.estimate, last.empirical);
        }
    }
}

#[test]
fn repeated_runs_are_identical() {
    let syn = small_benchmark();
    for strategy in [Strategy::BafaBo, Strategy::Power, Strategy::BoOnly] {
        let run = || {
            let oracle = CachedScorer::new(make_planted_bias_scorer(syn.scorer.clone()).unwrap());
            run_audit(
                &syn.pool,
                oracle,
                &settings(strategy, 52),
                9,
                Some(syn.truth),
                &Sequential,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }
}

#[test]
fn seed_only_budget_logs_one_round() {
    let syn = small_benchmark();
    let oracle = CachedScorer::new(make_planted_bias_scorer(syn.scorer.clone()).unwrap());
    let logs = run_audit(
        &syn.pool,
        oracle,
        &settings(Strategy::BafaDisagreement, 4),
        0,
        None,
        &Sequential,
    )
    .unwrap();
    assert_eq!(logs.len(), 1);
    assert_eq!(logs[0].round, 0);
    assert_eq!(logs[0].error, None);
}

#[test]
fn full_budget_plug_in_equals_truth() {
    let syn = generate_synthetic_pool(&SyntheticSpec {
        n: 200,
        dim: 4,
        seed: 1,
        ..SyntheticSpec::default()
    })
    .unwrap();
    for strategy in [Strategy::Random, Strategy::Stratified] {
        let oracle = CachedScorer::new(make_planted_bias_scorer(syn.scorer.clone()).unwrap());
        let s = AuditSettings {
            strategy,
            budget: 200,
            batch: 50,
            ..AuditSettings::default()
        };
        let logs = run_audit(&syn.pool, oracle, &s, 4, Some(syn.truth), &Sequential).unwrap();
        assert_eq!(logs.last().unwrap().estimate, Some(syn.truth));
    }
}

#[test]
fn last_round_is_truncated_to_budget() {
    let syn = small_benchmark();
    let oracle = CachedScorer::new(make_planted_bias_scorer(syn.scorer.clone()).unwrap());
    let logs = run_audit(
        &syn.pool,
        oracle,
        &settings(Strategy::Random, 30),
        0,
        None,
        &Sequential,
    )
    .unwrap();
    assert_eq!(
        logs.iter().map(|l| l.batch.len()).collect::<Vec<_>>(),
        vec![4, 16, 10]
    );
}

#[test]
fn early_stop_ends_on_narrow_certificate() {
    let syn = small_benchmark();
    let mut s = settings(Strategy::BafaDisagreement, 200);
    s.early_stop = Some(0.5);
    let oracle = CachedScorer::new(make_planted_bias_scorer(syn.scorer.clone()).unwrap());
    let logs = run_audit(&syn.pool, oracle, &s, 0, None, &Sequential).unwrap();
    assert_eq!(logs.len(), 1);
}

#[test]
fn oracle_power_needs_reference_scores() {
    let syn = small_benchmark();
    let s = AuditSettings {
        power_source: PowerSource::Oracle,
        ..settings(Strategy::Power, 40)
    };
    let oracle = CachedScorer::new(make_planted_bias_scorer(syn.scorer.clone()).unwrap());
    let mut run = AuditRun::new(&syn.pool, oracle, s.clone(), 0, &Sequential).unwrap();
    run.step().unwrap();
    assert!(matches!(run.step(), Err(HarnessError::InvalidConfig(_))));

    let oracle = CachedScorer::new(make_planted_bias_scorer(syn.scorer.clone()).unwrap());
    let mut run = AuditRun::new(&syn.pool, oracle, s, 0, &Sequential)
        .unwrap()
        .with_reference_scores(&syn.scores);
    while run.step().unwrap().is_some() {}
    assert_eq!(run.queried().len(), 40);
}

#[test]
fn invalid_settings_are_config_errors() {
    let syn = small_benchmark();
    let bad = [
        AuditSettings {
            budget: 3,
            ..AuditSettings::default()
        },
        AuditSettings {
            budget: 10_000,
            ..AuditSettings::default()
        },
        AuditSettings {
            batch: 0,
            ..AuditSettings::default()
        },
        AuditSettings {
            mix: Schedule {
                warmup_rounds: 0,
                ramp_rounds: 1,
                max_value: 2.0,
            },
            ..AuditSettings::default()
        },
    ];
    for s in bad {
        let oracle = CachedScorer::new(make_planted_bias_scorer(syn.scorer.clone()).unwrap());
        assert!(matches!(
            AuditRun::new(&syn.pool, oracle, s, 0, &Sequential),
            Err(HarnessError::InvalidConfig(_))
        ));
    }
}

#[test]
fn active_diagnostics_mark_the_batch() {
    let syn = small_benchmark();
    let oracle = CachedScorer::new(make_planted_bias_scorer(syn.scorer.clone()).unwrap());
    let mut run = AuditRun::new(
        &syn.pool,
        oracle,
        settings(Strategy::BafaBo, 100),
        2,
        &Sequential,
    )
    .unwrap();
    for _ in 0..6 {
        let log = run.step().unwrap().unwrap();
        if log.round == 0 {
            continue;
        }
        let chosen: BTreeSet<&str> = run
            .diagnostics()
            .iter()
            .filter(|d| d.selected)
            .map(|d| d.id.as_str())
            .collect();
        assert_eq!(chosen, log.batch.iter().map(String::as_str).collect());
        assert!(run
            .diagnostics()
            .iter()
            .all(|d| d.dist_weight >= 0.0 && d.final_score.is_finite()));
        if log.round >= 3 {
            assert!(run
                .diagnostics()
                .iter()
                .all(|d| d.acq01.is_some_and(|a| (0.0..=1.0).contains(&a))));
        }
    }
}

#[test]
fn synthetic_pool_lands_in_band_and_is_deterministic() {
    let spec = SyntheticSpec {
        n: 2000,
        dim: 10,
        seed: 5,
        ..SyntheticSpec::default()
    };
    let a = generate_synthetic_pool(&spec).unwrap();
    assert!((0.10..=0.18).contains(&a.truth), "{}", a.truth);
    let delta = pool_group_auc(&a.pool, &a.scores).delta.unwrap();
    assert_eq!(delta, a.truth);
    assert_eq!(a, generate_synthetic_pool(&spec).unwrap());
    assert!(a.pool.has_full_strata());
}

#[test]
fn equal_flip_rates_give_small_gap() {
    for seed in 0..10 {
        for p in [0.0, 0.15] {
            let spec = SyntheticSpec {
                band: None,
                flip_prob_group0: p,
                flip_prob_group1: p,
                seed,
                ..SyntheticSpec::default()
            };
            let a = generate_synthetic_pool(&spec).unwrap();
            assert!(a.truth.abs() <= 0.02, "seed {seed}, p {p}: {}", a.truth);
        }
    }
}

#[test]
fn unreachable_band_is_reported() {
    let spec = SyntheticSpec {
        n: 400,
        dim: 4,
        band: Some([0.6, 0.7]),
        ..SyntheticSpec::default()
    };
    assert!(matches!(
        generate_synthetic_pool(&spec),
        Err(HarnessError::InfeasibleCalibration { .. })
    ));
}

#[test]
fn summary_of_real_runs() {
    let syn = small_benchmark();
    let runs: Vec<(u64, Vec<_>)> = (0..2)
        .map(|seed| {
            let oracle = CachedScorer::new(make_planted_bias_scorer(syn.scorer.clone()).unwrap());
            (
                seed,
                run_audit(
                    &syn.pool,
                    oracle,
                    &settings(Strategy::CermStratified, 84),
                    seed,
                    Some(syn.truth),
                    &Sequential,
                )
                .unwrap(),
            )
        })
        .collect();
    let refs: Vec<(u64, &[_])> = runs.iter().map(|(s, l)| (*s, l.as_slice())).collect();
    let settings = SummarySettings {
        auec_horizon: 84,
        budgets: vec![20, 84],
        ..SummarySettings::default()
    };
    let sum = summarize(Strategy::CermStratified, &refs, Some(syn.truth), &settings);
    assert_eq!(sum.seeds, 2);
    assert!(sum.auec.is_some());
    assert_eq!(sum.at_budget.len(), 2);
    let cov = sum.coverage.unwrap();
    assert!((0.0..=1.0).contains(&cov));
    assert!(sum.mean_violation.unwrap() >= 0.0);
}
