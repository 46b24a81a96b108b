//! Immutable audit pool: examples, id index and (group, label) strata.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PoolError {
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("row {row}: expected {expected} features, found {found}")]
    InconsistentDimension {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: field `{field}` must be 0 or 1")]
    NonBinaryField { row: usize, field: &'static str },
    #[error("row {row}: non-finite feature value")]
    NonFiniteFeature { row: usize },
    #[error("pool is empty")]
    EmptyPool,
}

/// One labelled example of the audit pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditExample {
    pub id: String,
    pub features: Vec<f64>,
    pub group: u8,
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl AuditExample {
    pub fn new(id: impl Into<String>, features: Vec<f64>, group: u8, label: u8) -> Self {
        AuditExample {
            id: id.into(),
            features,
            group,
            label,
            text: None,
        }
    }

    pub fn stratum(&self) -> Stratum {
        Stratum {
            group: self.group,
            label: self.label,
        }
    }
}

/// A (group, label) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Stratum {
    pub group: u8,
    pub label: u8,
}

impl Stratum {
    /// All four cells in canonical order (0,0), (0,1), (1,0), (1,1).
    pub const ALL: [Stratum; 4] = [
        Stratum { group: 0, label: 0 },
        Stratum { group: 0, label: 1 },
        Stratum { group: 1, label: 0 },
        Stratum { group: 1, label: 1 },
    ];

    #[inline]
    pub fn index(self) -> usize {
        usize::from(self.group) * 2 + usize::from(self.label)
    }
}

/// Which attributes define a stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumKeys {
    Group,
    GroupAndLabel,
}

impl StratumKeys {
    /// Stratum key of an example; for `Group` the label slot is always 0.
    #[inline]
    pub fn key_of(self, ex: &AuditExample) -> Stratum {
        match self {
            StratumKeys::Group => Stratum {
                group: ex.group,
                label: 0,
            },
            StratumKeys::GroupAndLabel => ex.stratum(),
        }
    }
}

/// Fixed audit pool. Example order is ingestion order and is never changed;
/// positions (`usize`) index into [`AuditPool::examples`].
#[derive(Debug, Clone, PartialEq)]
pub struct AuditPool {
    examples: Vec<AuditExample>,
    dim: usize,
    by_id: BTreeMap<String, usize>,
    strata: [Vec<usize>; 4],
}

impl AuditPool {
    pub fn new(examples: Vec<AuditExample>) -> Result<Self, PoolError> {
        let first = examples.first().ok_or(PoolError::EmptyPool)?;
        let dim = first.features.len();
        let mut by_id = BTreeMap::new();
        let mut strata: [Vec<usize>; 4] = Default::default();
        for (row, ex) in examples.iter().enumerate() {
            if ex.features.len() != dim {
                return Err(PoolError::InconsistentDimension {
                    row,
                    expected: dim,
                    found: ex.features.len(),
                });
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(PoolError::NonFiniteFeature { row });
            }
            if ex.group > 1 {
                return Err(PoolError::NonBinaryField {
                    row,
                    field: "group",
                });
            }
            if ex.label > 1 {
                return Err(PoolError::NonBinaryField {
                    row,
                    field: "label",
                });
            }
            if by_id.insert(ex.id.clone(), row).is_some() {
                return Err(PoolError::DuplicateId(ex.id.clone()));
            }
            strata[ex.stratum().index()].push(row);
        }
        Ok(AuditPool {
            examples,
            dim,
            by_id,
            strata,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn examples(&self) -> &[AuditExample] {
        &self.examples
    }

    #[inline]
    pub fn get(&self, pos: usize) -> &AuditExample {
        &self.examples[pos]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Positions of the examples in a (group, label) cell, in pool order.
    pub fn stratum_members(&self, s: Stratum) -> &[usize] {
        &self.strata[s.index()]
    }

    /// Strata under `keys` with their member positions (pool order). Empty
    /// strata are omitted.
    pub fn strata(&self, keys: StratumKeys) -> Vec<(Stratum, Vec<usize>)> {
        match keys {
            StratumKeys::GroupAndLabel => Stratum::ALL
                .iter()
                .filter(|s| !self.strata[s.index()].is_empty())
                .map(|&s| (s, self.strata[s.index()].clone()))
                .collect(),
            StratumKeys::Group => (0..2u8)
                .filter_map(|g| {
                    let mut members: Vec<usize> = self.strata[usize::from(g) * 2]
                        .iter()
                        .chain(&self.strata[usize::from(g) * 2 + 1])
                        .copied()
                        .collect();
                    if members.is_empty() {
                        return None;
                    }
                    members.sort_unstable();
                    Some((Stratum { group: g, label: 0 }, members))
                })
                .collect(),
        }
    }

    /// True when every group holds at least one positive and one negative.
    pub fn has_full_strata(&self) -> bool {
        self.strata.iter().all(|s| !s.is_empty())
    }

    /// Copy of the pool with labels replaced; ids, order and features kept.
    pub fn with_labels(&self, labels: &[u8]) -> Result<Self, PoolError> {
        let examples = self
            .examples
            .iter()
            .zip(labels)
            .map(|(ex, &label)| AuditExample {
                label,
                ..ex.clone()
            })
            .collect();
        AuditPool::new(examples)
    }
}

/// Fraction of the pool in each stratum. Proportions sum to one.
pub fn stratum_proportions(
    pool: &AuditPool,
    keys: StratumKeys,
) -> Result<BTreeMap<Stratum, f64>, PoolError> {
    if pool.is_empty() {
        return Err(PoolError::EmptyPool);
    }
    let n = pool.len() as f64;
    Ok(pool
        .strata(keys)
        .into_iter()
        .map(|(s, members)| (s, members.len() as f64 / n))
        .collect())
}
