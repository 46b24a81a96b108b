use std::collections::BTreeMap;

use fairaudit_core::math::rng_for;
use fairaudit_core::metrics::{
    auec, bound_violation, exact_auc, group_auc, mcdiarmid_sample_size, mean_curve,
    queries_to_epsilon, smooth_delta_auc, ErrorCurve, SampleSizeBound, SmoothDelta,
};
use fairaudit_core::surrogate::{init_surrogate, loss_and_grad};
use fairaudit_core::{Architecture, AuditExample, AuditPool};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut twice = 0u64;
    for p in pos {
        for n in neg {
            twice += if p > n {
                2
            } else if p == n {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * pos.len() * neg.len()) as f64
}

/// Scores drawn from a coarse grid so ties are common.
fn tied_scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u8..12).prop_map(|k| f64::from(k) / 11.0), 1..60)
}

proptest! {
    #[test]
    fn exact_auc_equals_pair_count(pos in tied_scores(), neg in tied_scores()) {
        prop_assert_eq!(exact_auc(&pos, &neg).unwrap(), brute_auc(&pos, &neg));
    }

    #[test]
    fn auc_symmetry(pos in tied_scores(), neg in tied_scores()) {
        let a = exact_auc(&pos, &neg).unwrap();
        let b = exact_auc(&neg, &pos).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_monotone_transform(pos in tied_scores(), neg in tied_scores()) {
        let f = |v: &Vec<f64>| v.iter().map(|s| s * s * 0.5 + 0.1).collect::<Vec<_>>();
        prop_assert_eq!(exact_auc(&pos, &neg), exact_auc(&f(&pos), &f(&neg)));
    }

    #[test]
    fn violation_is_zero_inside(lo in 0.0f64..0.5, w in 0.0f64..0.5, frac in 0.0f64..=1.0) {
        let hi = lo + w;
        prop_assert_eq!(bound_violation(lo, hi, lo + frac * w).unwrap(), 0.0);
    }
}

#[test]
fn empty_side_has_no_auc() {
    assert_eq!(exact_auc(&[], &[0.1]), None);
    assert_eq!(exact_auc(&[0.1], &[]), None);
    assert_eq!(exact_auc(&[0.5], &[0.5]), Some(0.5));
}

fn pool_from_scores(cells: [&[f64]; 4]) -> (AuditPool, BTreeMap<String, f64>) {
    let mut ex = Vec::new();
    let mut scores = BTreeMap::new();
    for (c, vals) in cells.iter().enumerate() {
        for (i, &s) in vals.iter().enumerate() {
            let id = format!("c{c}-{i}");
            scores.insert(id.clone(), s);
            ex.push(AuditExample::new(id, vec![s], (c / 2) as u8, (c % 2) as u8));
        }
    }
    (AuditPool::new(ex).unwrap(), scores)
}

#[test]
fn group_auc_by_ids_matches_brute_force() {
    let mut rng = rng_for(11, &[]);
    for _ in 0..200 {
        let mut cells: [Vec<f64>; 4] = Default::default();
        for c in &mut cells {
            let n = rng.random_range(1..=100);
            *c = (0..n)
                .map(|_| f64::from(rng.random_range(0u8..20)) / 19.0)
                .collect();
        }
        let (pool, scores) = pool_from_scores([&cells[0], &cells[1], &cells[2], &cells[3]]);
        let ids: Vec<&str> = scores.keys().map(String::as_str).collect();
        let r = group_auc(&scores, &pool, &ids).unwrap();
        let a0 = brute_auc(&cells[1], &cells[0]);
        let a1 = brute_auc(&cells[3], &cells[2]);
        assert_eq!(r.auc_g0, Some(a0));
        assert_eq!(r.auc_g1, Some(a1));
        assert_eq!(r.delta, Some(a0 - a1));
        assert_eq!(r.positives, [cells[1].len(), cells[3].len()]);
    }
}

#[test]
fn smooth_delta_approaches_exact_for_small_tau() {
    let mut rng = rng_for(5, &[]);
    for _ in 0..100 {
        // Distinct grid scores, spacing 1/200, so every pair is separated by 50τ.
        let mut grid: Vec<usize> = (0..=200).collect();
        grid.shuffle(&mut rng);
        let mut next = grid.into_iter().map(|k| k as f64 / 200.0);
        let mut cells: [Vec<f64>; 4] = Default::default();
        for c in &mut cells {
            let n = rng.random_range(1..=40);
            *c = (&mut next).take(n).collect();
        }
        let (pool, scores) = pool_from_scores([&cells[0], &cells[1], &cells[2], &cells[3]]);
        let by_pos: Vec<f64> = pool.examples().iter().map(|e| scores[&e.id]).collect();
        let smooth = SmoothDelta::for_pool(&pool, 1e-4).unwrap().value(&by_pos);
        let exact = brute_auc(&cells[1], &cells[0]) - brute_auc(&cells[3], &cells[2]);
        assert!((smooth - exact).abs() <= 1e-6, "{smooth} vs {exact}");
    }
}

fn random_pool(seed: u64, n: usize, d: usize) -> AuditPool {
    let mut rng = rng_for(seed, &[1]);
    let ex = (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            AuditExample::new(format!("p{i}"), x, (i % 2) as u8, ((i / 2) % 2) as u8)
        })
        .collect();
    AuditPool::new(ex).unwrap()
}

#[test]
fn smooth_gradient_matches_finite_differences() {
    for trial in 0..50u64 {
        let pool = random_pool(trial, 40, 3);
        let arch = if trial % 2 == 0 {
            Architecture::Linear
        } else {
            Architecture::Mlp { hidden: 4 }
        };
        let h = init_surrogate(3, arch, trial).unwrap();
        let tau = 0.1;
        let sd = SmoothDelta::for_pool(&pool, tau).unwrap();
        let inputs: Vec<&[f64]> = pool
            .examples()
            .iter()
            .map(|e| e.features.as_slice())
            .collect();
        let obj = |s: &[f64], ds: &mut [f64]| sd.value_and_grad(s, 1.0, ds);
        let (value, grad) = loss_and_grad(&h, &inputs, &obj).unwrap();
        assert!((value - smooth_delta_auc(&h, &pool, tau).unwrap()).abs() < 1e-12);

        let eps = 1e-6;
        let fd: Vec<f64> = (0..h.params().len())
            .map(|i| {
                let mut up = h.clone();
                up.params_mut()[i] += eps;
                let mut dn = h.clone();
                dn.params_mut()[i] -= eps;
                (smooth_delta_auc(&up, &pool, tau).unwrap()
                    - smooth_delta_auc(&dn, &pool, tau).unwrap())
                    / (2.0 * eps)
            })
            .collect();
        let diff: f64 = grad
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
        assert!(
            diff / scale <= 1e-3,
            "trial {trial}: rel err {}",
            diff / scale
        );
    }
}

#[test]
fn mcdiarmid_integers() {
    // 3200·ln 80 = 14022.485…, so the ceiling is 14023.
    let cases = [
        (0.05, 0.05, 14023),
        (0.05, 0.1, 11805),
        (0.02, 0.05, 87641),
        (0.02, 0.1, 73778),
    ];
    for (eps, delta, want) in cases {
        assert_eq!(
            mcdiarmid_sample_size(eps, delta, true).unwrap(),
            SampleSizeBound::PerCell(want)
        );
    }
    let SampleSizeBound::Constraint { rhs } = mcdiarmid_sample_size(0.05, 0.05, false).unwrap()
    else {
        panic!("expected a constraint");
    };
    assert!((rhs - 800.0 * 80f64.ln()).abs() < 1e-9);
    assert!(mcdiarmid_sample_size(0.0, 0.05, true).is_err());
    assert!(mcdiarmid_sample_size(0.05, 1.0, true).is_err());
}

#[test]
fn curve_algebra() {
    let c = ErrorCurve::new(vec![(4, 0.2), (20, 0.1), (36, 0.01)], 0).unwrap();
    assert_eq!(c.at(1), Some(0.2));
    assert_eq!(c.at(19), Some(0.2));
    assert_eq!(c.at(20), Some(0.1));
    let a = auec(&c, 36).unwrap();
    assert!((a.total - (19.0 * 0.2 + 16.0 * 0.1 + 0.01)).abs() < 1e-12);
    assert_eq!(queries_to_epsilon(&c, 0.1), Some(20));
    assert_eq!(queries_to_epsilon(&c, 0.001), None);
    assert!(auec(&c, 37).is_err());
    assert!(ErrorCurve::new(vec![(4, 0.1), (4, 0.2)], 0).is_err());

    let d = ErrorCurve::new(vec![(4, 0.4), (12, 0.0)], 1).unwrap();
    let m = mean_curve(&[c, d]);
    assert_eq!(m.points()[0], (4, 0.30000000000000004));
    assert_eq!(m.points()[1], (12, 0.1));
    assert_eq!(m.at(20), Some(0.05));
}

#[test]
fn violation_outside_and_inverted() {
    assert!((bound_violation(0.1, 0.2, 0.25).unwrap() - 0.05).abs() < 1e-15);
    assert!((bound_violation(0.1, 0.2, 0.0).unwrap() - 0.1).abs() < 1e-15);
    assert!(bound_violation(0.3, 0.2, 0.25).is_err());
}
