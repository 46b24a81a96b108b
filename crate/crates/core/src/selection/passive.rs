use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use super::SelectionError;
use crate::cerm::QueriedSet;
use crate::pool::{AuditPool, StratumKeys};

fn unqueried(pool: &AuditPool, queried: &QueriedSet) -> Vec<usize> {
    (0..pool.len()).filter(|&p| !queried.contains(p)).collect()
}

/// `k` unqueried positions, uniformly without replacement.
pub fn select_random<R: Rng>(
    pool: &AuditPool,
    queried: &QueriedSet,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>, SelectionError> {
    let free = unqueried(pool, queried);
    if free.len() < k {
        return Err(SelectionError::PoolExhausted {
            requested: k,
            available: free.len(),
        });
    }
    Ok(index::sample(rng, free.len(), k)
        .into_iter()
        .map(|i| free[i])
        .collect())
}

/// Largest-remainder apportionment of `n` seats by integer `weights`.
///
/// Every stratum first gets `⌊n·w_s/W⌋`; the remaining seats go to the largest
/// remainders, earlier strata first on ties. The result is the ceil-quota
/// vector `⌈n·w_s/W⌉` trimmed back to `n`.
pub fn apportion(weights: &[usize], n: usize) -> Vec<usize> {
    let total: usize = weights.iter().sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    let mut quota: Vec<usize> = weights.iter().map(|&w| n * w / total).collect();
    let rem: Vec<usize> = weights.iter().map(|&w| n * w % total).collect();
    let assigned: usize = quota.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| rem[i] > 0).collect();
    order.sort_by(|&a, &b| rem[b].cmp(&rem[a]).then(a.cmp(&b)));
    for &i in order.iter().take(n - assigned) {
        quota[i] += 1;
    }
    quota
}

/// Quotas for drawing `n` items from strata with full-pool sizes `sizes` and
/// `capacity` unqueried members each. Proportional to `sizes`; a stratum that
/// cannot fill its quota passes the deficit on to the others in proportion to
/// their sizes.
pub fn stratified_quotas(
    sizes: &[usize],
    capacity: &[usize],
    n: usize,
) -> Result<Vec<usize>, SelectionError> {
    let available: usize = capacity.iter().sum();
    if available < n {
        return Err(SelectionError::PoolExhausted {
            requested: n,
            available,
        });
    }
    let mut quota = vec![0usize; sizes.len()];
    let mut open: Vec<bool> = capacity.iter().map(|&c| c > 0).collect();
    let mut left = n;
    while left > 0 {
        let weights: Vec<usize> = sizes
            .iter()
            .zip(&open)
            .map(|(&s, &o)| if o { s.max(1) } else { 0 })
            .collect();
        let share = apportion(&weights, left);
        let mut placed = 0;
        for i in 0..sizes.len() {
            let room = capacity[i] - quota[i];
            let take = share[i].min(room);
            quota[i] += take;
            placed += take;
            if quota[i] == capacity[i] {
                open[i] = false;
            }
        }
        left -= placed;
    }
    Ok(quota)
}

/// `n` unqueried positions drawn stratum by stratum under
/// [`stratified_quotas`], uniformly without replacement within each stratum.
pub fn select_stratified<R: Rng>(
    pool: &AuditPool,
    queried: &QueriedSet,
    n: usize,
    keys: StratumKeys,
    rng: &mut R,
) -> Result<Vec<usize>, SelectionError> {
    let strata = pool.strata(keys);
    let sizes: Vec<usize> = strata.iter().map(|(_, m)| m.len()).collect();
    let free: Vec<Vec<usize>> = strata
        .iter()
        .map(|(_, m)| {
            m.iter()
                .copied()
                .filter(|&p| !queried.contains(p))
                .collect()
        })
        .collect();
    let capacity: Vec<usize> = free.iter().map(Vec::len).collect();
    let quota = stratified_quotas(&sizes, &capacity, n)?;
    let mut out = Vec::with_capacity(n);
    for (members, &q) in free.iter().zip(&quota) {
        out.extend(
            index::sample(rng, members.len(), q)
                .into_iter()
                .map(|i| members[i]),
        );
    }
    Ok(out)
}

/// Power sampling: `k` unqueried positions drawn sequentially without
/// replacement with probability `∝ (p(1−p))^γ`. `scores` is indexed by pool
/// position. Zero-weight candidates are only drawn once every positive-weight
/// candidate is taken (uniformly among themselves).
pub fn select_power<R: Rng>(
    pool: &AuditPool,
    queried: &QueriedSet,
    k: usize,
    gamma: f64,
    scores: &[f64],
    rng: &mut R,
) -> Result<Vec<usize>, SelectionError> {
    if !(gamma >= 0.0) {
        return Err(SelectionError::InvalidSetting(
            "power exponent must be nonnegative",
        ));
    }
    let mut free = unqueried(pool, queried);
    if free.len() < k {
        return Err(SelectionError::PoolExhausted {
            requested: k,
            available: free.len(),
        });
    }
    let mut weights: Vec<f64> = free
        .iter()
        .map(|&p| {
            let s = scores[p];
            let w = libm::pow(s * (1.0 - s), gamma);
            if w.is_finite() && w > 0.0 {
                w
            } else {
                0.0
            }
        })
        .collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &w) in weights.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if u < w {
                    chosen = Some(i);
                    break;
                }
                u -= w;
            }
            // Floating-point leftovers land on the last positive weight.
            chosen.unwrap_or_else(|| weights.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            rng.random_range(0..free.len())
        };
        out.push(free.swap_remove(pick));
        weights.swap_remove(pick);
    }
    Ok(out)
}
