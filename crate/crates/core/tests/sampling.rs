use std::collections::BTreeSet;

use fairaudit_core::cerm::QueriedSet;
use fairaudit_core::math::rng_for;
use fairaudit_core::selection::{
    apportion, distribution_weights, mmr_select, select_power, select_random, select_stratified,
    stratified_quotas, top_k,
};
use fairaudit_core::{AuditExample, AuditPool, StratumKeys};
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn pool_with(cells: [usize; 4]) -> AuditPool {
    let mut ex = Vec::new();
    for (c, &n) in cells.iter().enumerate() {
        for i in 0..n {
            ex.push(AuditExample::new(
                format!("c{c}_{i:04}"),
                vec![i as f64],
                (c / 2) as u8,
                (c % 2) as u8,
            ));
        }
    }
    AuditPool::new(ex).unwrap()
}

fn chi2_p(observed: &[u64], expected: &[f64]) -> f64 {
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    1.0 - ChiSquared::new((observed.len() - 1) as f64)
        .unwrap()
        .cdf(stat)
}

#[test]
fn power_sampling_frequencies() {
    let pool = pool_with([3, 3, 2, 2]);
    let scores = [0.5, 0.1, 0.3, 0.9, 0.7, 0.45, 0.2, 0.05, 0.6, 0.35];
    let draws = 20_000u64;
    for gamma in [1.0, 2.0, 0.5] {
        let weights: Vec<f64> = scores
            .iter()
            .map(|s: &f64| (s * (1.0 - s)).powf(gamma))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut counts = vec![0u64; scores.len()];
        let mut rng = rng_for(17, &[gamma.to_bits()]);
        for _ in 0..draws {
            let got = select_power(&pool, &QueriedSet::new(), 1, gamma, &scores, &mut rng).unwrap();
            counts[got[0]] += 1;
        }
        let expected: Vec<f64> = weights.iter().map(|w| draws as f64 * w / total).collect();
        let p = chi2_p(&counts, &expected);
        assert!(p > 0.01, "gamma {gamma}: p = {p}, counts {counts:?}");
    }
}

#[test]
fn random_selection_is_uniform() {
    let pool = pool_with([5, 5, 5, 5]);
    let mut counts = vec![0u64; 20];
    let mut rng = rng_for(2, &[]);
    for _ in 0..5_000 {
        for p in select_random(&pool, &QueriedSet::new(), 4, &mut rng).unwrap() {
            counts[p] += 1;
        }
    }
    assert!(chi2_p(&counts, &[1000.0; 20]) > 0.01);
}

/// Ceil every exact share, then take seats back one at a time from the stratum
/// with the smallest fractional share (the later stratum on ties). Rational
/// arithmetic throughout.
fn ceil_trim_oracle(sizes: &[usize], n: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let mut quota: Vec<usize> = sizes.iter().map(|&w| (n * w).div_ceil(total)).collect();
    let frac = |i: usize| (n * sizes[i]) % total;
    let mut surplus = quota.iter().sum::<usize>() - n;
    while surplus > 0 {
        let victim = (0..sizes.len())
            .filter(|&i| frac(i) > 0 && quota[i] * total > n * sizes[i])
            .min_by(|&a, &b| frac(a).cmp(&frac(b)).then(b.cmp(&a)))
            .unwrap();
        quota[victim] -= 1;
        surplus -= 1;
    }
    quota
}

#[test]
fn stratified_quotas_match_oracle() {
    let mut rng = rng_for(23, &[]);
    for _ in 0..100 {
        let cells = [(); 4].map(|_| rng.random_range(1..200usize));
        let pool = pool_with(cells);
        let n = rng.random_range(1..=pool.len().min(120));
        let picked = select_stratified(
            &pool,
            &QueriedSet::new(),
            n,
            StratumKeys::GroupAndLabel,
            &mut rng,
        )
        .unwrap();
        let mut counts = vec![0usize; 4];
        for &p in &picked {
            counts[pool.get(p).stratum().index()] += 1;
        }
        assert_eq!(
            counts,
            ceil_trim_oracle(&cells, n),
            "cells {cells:?}, n {n}"
        );
        assert_eq!(picked.iter().collect::<BTreeSet<_>>().len(), n);
    }
}

proptest! {
    #[test]
    fn apportion_sums_and_stays_within_one(weights in prop::collection::vec(0usize..500, 1..8), n in 0usize..300) {
        let q = apportion(&weights, n);
        let total: usize = weights.iter().sum();
        if total == 0 {
            prop_assert!(q.iter().all(|&v| v == 0));
        } else {
            prop_assert_eq!(q.iter().sum::<usize>(), n);
            for (w, v) in weights.iter().zip(&q) {
                let exact = (n * w) as f64 / total as f64;
                prop_assert!((*v as f64 - exact).abs() < 1.0);
            }
            prop_assert_eq!(q, ceil_trim_oracle(&weights, n));
        }
    }

    #[test]
    fn quotas_respect_capacity(sizes in prop::collection::vec(1usize..100, 1..6), seed in any::<u64>()) {
        let mut rng = rng_for(seed, &[]);
        let capacity: Vec<usize> = sizes.iter().map(|&s| rng.random_range(0..=s)).collect();
        let available: usize = capacity.iter().sum();
        let n = rng.random_range(0..=available);
        let q = stratified_quotas(&sizes, &capacity, n).unwrap();
        prop_assert_eq!(q.iter().sum::<usize>(), n);
        prop_assert!(q.iter().zip(&capacity).all(|(a, c)| a <= c));
    }

    #[test]
    fn selections_avoid_queried(seed in any::<u64>(), k in 1usize..10) {
        let pool = pool_with([6, 6, 6, 6]);
        let mut q = QueriedSet::new();
        let mut rng = rng_for(seed, &[]);
        let first = select_random(&pool, &q, 8, &mut rng).unwrap();
        q.push_round(&pool, first.iter().map(|&p| (pool.get(p).id.as_str(), 0.5))).unwrap();
        let scores = vec![0.3; pool.len()];
        for picked in [
            select_random(&pool, &q, k, &mut rng).unwrap(),
            select_stratified(&pool, &q, k, StratumKeys::GroupAndLabel, &mut rng).unwrap(),
            select_power(&pool, &q, k, 1.0, &scores, &mut rng).unwrap(),
        ] {
            prop_assert_eq!(picked.len(), k);
            prop_assert!(picked.iter().all(|&p| !q.contains(p)));
            prop_assert_eq!(picked.iter().collect::<BTreeSet<_>>().len(), k);
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn mean_pairwise_cosine(phi: &[Vec<f64>], picked: &[usize]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for i in 0..picked.len() {
        for j in i + 1..picked.len() {
            sum += cosine(&phi[picked[i]], &phi[picked[j]]);
            n += 1;
        }
    }
    sum / n as f64
}

/// Straight transcription of the greedy rule, recomputing every similarity.
fn mmr_oracle(scores: &[f64], phi: &[Vec<f64>], ids: &[&str], k: usize, gamma: f64) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    while out.len() < k {
        let best = (0..scores.len())
            .filter(|i| !out.contains(i))
            .map(|i| {
                let sim = out
                    .iter()
                    .map(|&j| cosine(&phi[i], &phi[j]))
                    .fold(f64::NEG_INFINITY, f64::max);
                let v = if out.is_empty() {
                    scores[i]
                } else {
                    scores[i] - gamma * sim
                };
                (i, v)
            })
            .min_by(|a, b| b.1.total_cmp(&a.1).then(ids[a.0].cmp(ids[b.0])))
            .unwrap();
        out.push(best.0);
    }
    out
}

fn random_instance(seed: u64, n: usize, d: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<String>) {
    let mut rng = rng_for(seed, &[0x33]);
    let scores = (0..n).map(|_| rng.random::<f64>()).collect();
    let phi = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let ids = (0..n).map(|i| format!("id{i:03}")).collect();
    (scores, phi, ids)
}

#[test]
fn mmr_matches_oracle() {
    for seed in 0..100 {
        let (scores, phi, ids) = random_instance(seed, 60, 3);
        let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
        let mmr = mmr_select(&scores, &phi, &ids, 8, 0.5).unwrap();
        assert_eq!(mmr, mmr_oracle(&scores, &phi, &ids, 8, 0.5));
        assert_eq!(
            mmr_select(&scores, &phi, &ids, 8, 0.0).unwrap(),
            top_k(&scores, &ids, 8).unwrap()
        );
    }
}

/// Candidates as the audit loop builds them: `φ = [disagreement, group]` and a
/// final score of disagreement times a stratum weight.
fn audit_like_instance(seed: u64, n: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<String>) {
    let mut rng = rng_for(seed, &[0x33]);
    let mut scores = Vec::with_capacity(n);
    let mut phi = Vec::with_capacity(n);
    for _ in 0..n {
        let dis: f64 = rng.random();
        let g = f64::from(rng.random_range(0..2u8));
        scores.push(dis * [0.5, 1.0, 2.0][rng.random_range(0..3)]);
        phi.push(vec![dis, g]);
    }
    (scores, phi, (0..n).map(|i| format!("id{i:04}")).collect())
}

#[test]
fn mmr_batches_are_no_less_diverse_than_top_k() {
    for seed in 0..100 {
        let (scores, phi, ids) = audit_like_instance(seed, 1000);
        let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
        let mmr = mmr_select(&scores, &phi, &ids, 16, 0.2).unwrap();
        let plain = top_k(&scores, &ids, 16).unwrap();
        assert!(
            mean_pairwise_cosine(&phi, &mmr) <= mean_pairwise_cosine(&phi, &plain) + 1e-12,
            "seed {seed}"
        );
    }
}

#[test]
fn duplicate_top_candidate_is_skipped() {
    let scores = [0.9, 0.9, 0.5];
    let phi = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
    assert_eq!(
        mmr_select(&scores, &phi, &["a", "b", "c"], 2, 5.0).unwrap(),
        vec![0, 2]
    );
}

#[test]
fn distribution_weights_favour_missing_strata() {
    let pool = pool_with([40, 10, 40, 10]);
    let mut q = QueriedSet::new();
    let ids: Vec<&str> = (0..10).map(|p| pool.get(p).id.as_str()).collect();
    q.push_round(&pool, ids.into_iter().map(|id| (id, 0.5)))
        .unwrap();
    let w = distribution_weights(&pool, &q, 2.0, 5.0);
    assert_eq!(w[0], 0.0);
    assert_eq!(w[1], 9.0);
    assert_eq!(w[2], 9.0);
    assert_eq!(distribution_weights(&pool, &q, 0.0, 5.0), [1.0; 4]);
}
