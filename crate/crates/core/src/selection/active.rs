use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{Schedule, SelectionError};
use crate::cerm::QueriedSet;
use crate::gp::GpModel;
use crate::math::{dot, norm, sanitize, sigmoid};
use crate::pool::{AuditPool, Stratum};

const DIV_EPS: f64 = 1e-6;

/// Elementwise `|up − low|`.
pub fn disagreement(low: &[f64], up: &[f64]) -> Vec<f64> {
    low.iter()
        .zip(up)
        .map(|(l, u)| sanitize((u - l).abs()))
        .collect()
}

/// Id-keyed form of [`disagreement`] over `candidates`.
pub fn score_disagreement(
    low: &BTreeMap<String, f64>,
    up: &BTreeMap<String, f64>,
    candidates: &[&str],
) -> Result<BTreeMap<String, f64>, SelectionError> {
    candidates
        .iter()
        .map(|&id| {
            let l = low
                .get(id)
                .ok_or_else(|| SelectionError::MissingScore(id.to_string()))?;
            let u = up
                .get(id)
                .ok_or_else(|| SelectionError::MissingScore(id.to_string()))?;
            Ok((id.to_string(), sanitize((u - l).abs())))
        })
        .collect()
}

/// `[dis, extra…]` with non-finite entries replaced by 0.
pub fn build_features(dis: f64, extras: &[&[f64]]) -> Vec<f64> {
    let mut phi = Vec::with_capacity(1 + extras.iter().map(|e| e.len()).sum::<usize>());
    phi.push(sanitize(dis));
    for e in extras {
        phi.extend(e.iter().map(|&v| sanitize(v)));
    }
    phi
}

/// Per-candidate output of [`bo_combine`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoScore {
    /// Raw UCB value; `None` when no GP was consulted.
    pub acq: Option<f64>,
    pub acq01: Option<f64>,
    pub mix_weight: f64,
    pub combined: f64,
}

/// Blend `base` with the squashed UCB acquisition.
///
/// `acq = μ + β·σ`, z-scored across candidates, squashed by a logistic with its
/// input clipped to `[−10, 10]`, then `comb = (1 − λ)·base + λ·acq01` with
/// `λ = schedule.value(t)`. With `restrict_quantile = Some(q)` only candidates
/// whose base lies at or above the `q`-quantile of `base` receive acquisition
/// credit; the rest get `acq01 = 0`. A missing GP is only an error once the
/// schedule gives the acquisition positive weight.
pub fn bo_combine(
    base: &[f64],
    gp: Option<&GpModel>,
    phi: &[Vec<f64>],
    beta: f64,
    schedule: &Schedule,
    t: usize,
    restrict_quantile: Option<f64>,
) -> Result<Vec<BoScore>, SelectionError> {
    let mix = schedule.value(t);
    let gp = match gp {
        Some(gp) => gp,
        None if mix == 0.0 => {
            return Ok(base
                .iter()
                .map(|&b| BoScore {
                    acq: None,
                    acq01: None,
                    mix_weight: 0.0,
                    combined: sanitize(b),
                })
                .collect())
        }
        None => return Err(SelectionError::UnfittedGp),
    };
    if phi.len() != base.len() {
        return Err(SelectionError::InvalidSetting(
            "feature and base score counts differ",
        ));
    }
    let (means, vars) = gp.predict(phi)?;
    let acq: Vec<f64> = means
        .iter()
        .zip(&vars)
        .map(|(m, v)| sanitize(m + beta * libm::sqrt(*v)))
        .collect();
    let n = acq.len().max(1) as f64;
    let mu = acq.iter().sum::<f64>() / n;
    let sd = libm::sqrt(acq.iter().map(|a| (a - mu) * (a - mu)).sum::<f64>() / n);
    let threshold = restrict_quantile.map(|q| quantile(base, q));
    Ok(base
        .iter()
        .zip(&acq)
        .map(|(&b, &a)| {
            let z = ((a - mu) / (sd + 1e-8)).clamp(-10.0, 10.0);
            let eligible = threshold.is_none_or(|th| b >= th);
            let acq01 = if eligible { sigmoid(z) } else { 0.0 };
            BoScore {
                acq: Some(a),
                acq01: Some(acq01),
                mix_weight: mix,
                combined: sanitize((1.0 - mix) * b + mix * acq01),
            }
        })
        .collect())
}

/// Empirical quantile by nearest rank, rounding up.
fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let i = libm::ceil(q.clamp(0.0, 1.0) * (v.len() - 1) as f64) as usize;
    v[i]
}

/// Distribution-matching weight per `(g, y)` stratum, indexed by
/// [`Stratum::index`].
///
/// `w = max(0, 1 + α·(r − 1))` with `r = p_pool / max(p_queried, 1e-6)`
/// clipped to `[1/cap, cap]`; a stratum absent from the queried set gets
/// `r = cap`.
pub fn distribution_weights(
    pool: &AuditPool,
    queried: &QueriedSet,
    alpha: f64,
    cap: f64,
) -> [f64; 4] {
    let counts = queried.stratum_counts(pool);
    let total = queried.len().max(1) as f64;
    let mut w = [1.0; 4];
    for s in Stratum::ALL {
        let i = s.index();
        let p_d = pool.stratum_members(s).len() as f64 / pool.len() as f64;
        let ratio = if counts[i] == 0 {
            cap
        } else {
            let p_t = counts[i] as f64 / total;
            (p_d / p_t.max(DIV_EPS)).clamp(1.0 / cap, cap)
        };
        w[i] = (1.0 + alpha * (ratio - 1.0)).max(0.0);
    }
    w
}

fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Indices of the `k` largest scores, ties broken by ascending id.
pub fn top_k(scores: &[f64], ids: &[&str], k: usize) -> Result<Vec<usize>, SelectionError> {
    if scores.len() < k {
        return Err(SelectionError::PoolExhausted {
            requested: k,
            available: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| rank_order((scores[i], ids[i]), (scores[j], ids[j])));
    order.truncate(k);
    Ok(order)
}

fn cosine(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Greedy maximal-marginal-relevance batch: each pick maximises
/// `score − γ·max cos(φ, φ_selected)`. Returns candidate indices in pick order.
pub fn mmr_select(
    scores: &[f64],
    phi: &[Vec<f64>],
    ids: &[&str],
    k: usize,
    gamma: f64,
) -> Result<Vec<usize>, SelectionError> {
    if scores.len() < k {
        return Err(SelectionError::PoolExhausted {
            requested: k,
            available: scores.len(),
        });
    }
    let norms: Vec<f64> = phi.iter().map(|p| norm(p)).collect();
    let mut max_sim = alloc::vec![f64::NEG_INFINITY; scores.len()];
    let mut taken = alloc::vec![false; scores.len()];
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..scores.len() {
            if taken[i] {
                continue;
            }
            let penalty = if out.is_empty() {
                0.0
            } else {
                gamma * max_sim[i]
            };
            let v = scores[i] - penalty;
            let better = match best {
                None => true,
                Some((j, bv)) => rank_order((v, ids[i]), (bv, ids[j])) == Ordering::Less,
            };
            if better {
                best = Some((i, v));
            }
        }
        let (pick, _) = best.expect("candidate count checked above");
        taken[pick] = true;
        out.push(pick);
        for i in 0..scores.len() {
            if !taken[i] {
                let c = cosine(&phi[i], &phi[pick], norms[i], norms[pick]);
                if c > max_sim[i] {
                    max_sim[i] = c;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{fit_gp, Kernel, KernelKind};
    use crate::pool::AuditExample;
    use alloc::format;
    use alloc::vec;

    #[test]
    fn disagreement_examples() {
        assert_eq!(disagreement(&[0.25, 0.4], &[0.75, 0.4]), vec![0.5, 0.0]);
        let low: BTreeMap<String, f64> = [("a".into(), 0.2)].into_iter().collect();
        let up: BTreeMap<String, f64> = [("a".into(), 0.7)].into_iter().collect();
        let got = score_disagreement(&low, &up, &["a"]).unwrap();
        assert!((got["a"] - 0.5).abs() < 1e-15);
        assert_eq!(
            score_disagreement(&low, &up, &["b"]),
            Err(SelectionError::MissingScore("b".into()))
        );
    }

    #[test]
    fn features_layout() {
        assert_eq!(build_features(0.3, &[]), vec![0.3]);
        assert_eq!(build_features(0.3, &[&[0.1, -0.2]]), vec![0.3, 0.1, -0.2]);
        assert_eq!(
            build_features(f64::NAN, &[&[f64::INFINITY, 1.0]]),
            vec![0.0, 0.0, 1.0]
        );
    }

    fn gp1() -> GpModel {
        fit_gp(
            &[vec![0.0]],
            &[1.0],
            Kernel {
                kind: KernelKind::Rbf,
                lengthscale: 1.0,
                signal_variance: 1.0,
            },
            0.0,
            false,
        )
        .unwrap()
    }

    #[test]
    fn warmup_returns_base() {
        let sched = Schedule {
            warmup_rounds: 3,
            ramp_rounds: 5,
            max_value: 0.5,
        };
        let base = [0.1, 0.7, 0.3];
        let phi = vec![vec![0.0], vec![1.0], vec![2.0]];
        let out = bo_combine(&base, Some(&gp1()), &phi, 1.0, &sched, 1, None).unwrap();
        for (o, b) in out.iter().zip(base) {
            assert_eq!(o.combined, b);
        }
        assert!(bo_combine(&base, None, &phi, 1.0, &sched, 1, None).is_ok());
        assert_eq!(
            bo_combine(&base, None, &phi, 1.0, &sched, 5, None),
            Err(SelectionError::UnfittedGp)
        );
    }

    #[test]
    fn constant_acquisition_is_neutral() {
        let sched = Schedule {
            warmup_rounds: 0,
            ramp_rounds: 0,
            max_value: 0.5,
        };
        let base = [0.1, 0.7, 0.3];
        // Identical φ gives identical UCB.
        let phi = vec![vec![0.4]; 3];
        let out = bo_combine(&base, Some(&gp1()), &phi, 1.0, &sched, 0, None).unwrap();
        for (o, b) in out.iter().zip(base) {
            assert_eq!(o.acq01, Some(0.5));
            assert!((o.combined - (0.5 * b + 0.25)).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_built_three_candidates() {
        // GP on one point (x=0, y=1), RBF ℓ=1, σ_f²=1, σ_n²=0.
        // At x: μ = k·y/(1+j), σ² = 1 − k²/(1+j), k = exp(−x²/2).
        let gp = gp1();
        let j = gp.jitter();
        let xs = [0.0, 1.0, 2.0];
        let acq: Vec<f64> = xs
            .iter()
            .map(|x: &f64| {
                let k = libm::exp(-0.5 * x * x);
                k / (1.0 + j) + 2.0 * libm::sqrt((1.0 - k * k / (1.0 + j)).max(0.0))
            })
            .collect();
        let m = acq.iter().sum::<f64>() / 3.0;
        let sd = libm::sqrt(acq.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 3.0);
        let base = [0.2, 0.5, 0.1];
        let sched = Schedule {
            warmup_rounds: 0,
            ramp_rounds: 0,
            max_value: 0.5,
        };
        let phi: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let out = bo_combine(&base, Some(&gp), &phi, 2.0, &sched, 0, None).unwrap();
        for i in 0..3 {
            let z: f64 = (acq[i] - m) / (sd + 1e-8);
            let a01 = 1.0 / (1.0 + libm::exp(-z.clamp(-10.0, 10.0)));
            assert!((out[i].combined - (0.5 * base[i] + 0.5 * a01)).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_restriction_zeroes_low_disagreement() {
        let sched = Schedule {
            warmup_rounds: 0,
            ramp_rounds: 0,
            max_value: 1.0,
        };
        let base = [0.1, 0.9, 0.5, 0.2];
        let phi: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let out = bo_combine(&base, Some(&gp1()), &phi, 1.0, &sched, 0, Some(0.5)).unwrap();
        assert_eq!(out[0].acq01, Some(0.0));
        assert_eq!(out[3].acq01, Some(0.0));
        assert!(out[1].acq01.unwrap() > 0.0);
    }

    fn pool_with(cells: [usize; 4]) -> AuditPool {
        let mut ex = Vec::new();
        for (c, &n) in cells.iter().enumerate() {
            for i in 0..n {
                ex.push(AuditExample::new(
                    format!("c{c}_{i}"),
                    vec![0.0],
                    (c / 2) as u8,
                    (c % 2) as u8,
                ));
            }
        }
        AuditPool::new(ex).unwrap()
    }

    fn query(pool: &AuditPool, ids: &[&str]) -> QueriedSet {
        let mut q = QueriedSet::new();
        q.push_round(pool, ids.iter().map(|&id| (id, 0.5))).unwrap();
        q
    }

    #[test]
    fn matched_distributions_give_unit_weights() {
        let pool = pool_with([2, 2, 2, 2]);
        let q = query(&pool, &["c0_0", "c1_0", "c2_0", "c3_0"]);
        assert_eq!(distribution_weights(&pool, &q, 2.0, 5.0), [1.0; 4]);
        let q = query(&pool, &["c0_0", "c0_1"]);
        assert_eq!(distribution_weights(&pool, &q, 0.0, 5.0), [1.0; 4]);
    }

    #[test]
    fn weight_formula() {
        // Stratum 0 holds half the pool but a quarter of the queries: ratio 2.
        let pool = pool_with([4, 2, 1, 1]);
        let q = query(&pool, &["c0_0", "c1_0", "c1_1", "c2_0"]);
        let w = distribution_weights(&pool, &q, 2.0, 5.0);
        assert!((w[0] - 3.0).abs() < 1e-12);
        // Absent stratum defaults to the cap.
        assert!((w[3] - (1.0 + 2.0 * 4.0)).abs() < 1e-12);
        // Over-sampled stratum: ratio 0.25/0.5 = 0.5, weight 1 + 2·(−0.5) = 0.
        assert_eq!(w[1], 0.0);
    }

    #[test]
    fn top_k_and_ties() {
        let ids = ["b", "a", "c"];
        assert_eq!(top_k(&[0.5, 0.5, 0.9], &ids, 2).unwrap(), vec![2, 1]);
        assert!(top_k(&[0.5], &["a"], 2).is_err());
    }

    #[test]
    fn mmr_without_penalty_is_top_k() {
        let scores = [0.3, 0.9, 0.1, 0.6];
        let ids = ["a", "b", "c", "d"];
        let phi: Vec<Vec<f64>> = (0..4).map(|i| vec![1.0, i as f64]).collect();
        assert_eq!(
            mmr_select(&scores, &phi, &ids, 3, 0.0).unwrap(),
            top_k(&scores, &ids, 3).unwrap()
        );
    }

    #[test]
    fn mmr_skips_duplicate() {
        let scores = [0.9, 0.9, 0.2];
        let ids = ["a", "b", "c"];
        let phi = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(
            mmr_select(&scores, &phi, &ids, 2, 10.0).unwrap(),
            vec![0, 2]
        );
    }

    #[test]
    fn mmr_zero_vector_has_no_similarity() {
        let scores = [0.9, 0.5, 0.6];
        let ids = ["a", "b", "c"];
        let phi = vec![vec![1.0], vec![0.0], vec![1.0]];
        assert_eq!(mmr_select(&scores, &phi, &ids, 2, 1.0).unwrap(), vec![0, 1]);
    }
}
