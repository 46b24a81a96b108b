//! Scorer adapters and the cache shared by concurrent audit runs.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex, MutexGuard};

use fairaudit_core::blackbox::{check_response, BlackBox};
use fairaudit_core::{AuditExample, BlackBoxError, ScoreOracle, ScoreRecord};

/// Adapts a per-example [`BlackBox`] to a batch oracle.
#[derive(Debug, Clone)]
pub struct BatchOf<B>(pub B);

impl<B: BlackBox> ScoreOracle for BatchOf<B> {
    fn score_batch(
        &mut self,
        examples: &[&AuditExample],
    ) -> Result<Vec<ScoreRecord>, BlackBoxError> {
        examples
            .iter()
            .map(|e| {
                Ok(ScoreRecord {
                    id: e.id.clone(),
                    score: self.0.score_one(e)?,
                })
            })
            .collect()
    }
}

/// Scores looked up in a fixed `id → score` table, e.g. a score-cache CSV.
#[derive(Debug, Clone, Default)]
pub struct TableScorer {
    table: BTreeMap<String, f64>,
}

impl TableScorer {
    pub fn new(table: BTreeMap<String, f64>) -> Self {
        TableScorer { table }
    }

    pub fn table(&self) -> &BTreeMap<String, f64> {
        &self.table
    }
}

impl ScoreOracle for TableScorer {
    fn score_batch(
        &mut self,
        examples: &[&AuditExample],
    ) -> Result<Vec<ScoreRecord>, BlackBoxError> {
        examples
            .iter()
            .map(|e| match self.table.get(&e.id) {
                Some(&score) => Ok(ScoreRecord {
                    id: e.id.clone(),
                    score,
                }),
                None => Err(BlackBoxError::RemoteProtocol(format!(
                    "id {:?} not in the score table",
                    e.id
                ))),
            })
            .collect()
    }
}

struct CacheState {
    oracle: Box<dyn ScoreOracle + Send>,
    scores: BTreeMap<String, f64>,
    forwarded: usize,
}

/// An id-keyed score cache in front of one scorer, shared between threads.
///
/// The lock is held while the inner scorer runs, so two runs asking for the
/// same id never both forward it.
pub struct SharedCache {
    state: Mutex<CacheState>,
}

impl SharedCache {
    pub fn new(oracle: impl ScoreOracle + Send + 'static) -> Arc<Self> {
        Self::with_scores(oracle, BTreeMap::new())
    }

    /// Starts from previously persisted scores; those ids are never forwarded.
    pub fn with_scores(
        oracle: impl ScoreOracle + Send + 'static,
        scores: BTreeMap<String, f64>,
    ) -> Arc<Self> {
        Arc::new(SharedCache {
            state: Mutex::new(CacheState {
                oracle: Box::new(oracle),
                scores,
                forwarded: 0,
            }),
        })
    }

    fn lock(&self) -> MutexGuard<'_, CacheState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Distinct ids sent to the inner scorer so far.
    pub fn forwarded(&self) -> usize {
        self.lock().forwarded
    }

    pub fn scores(&self) -> BTreeMap<String, f64> {
        self.lock().scores.clone()
    }

    fn fetch(&self, examples: &[&AuditExample]) -> Result<Vec<ScoreRecord>, BlackBoxError> {
        let mut st = self.lock();
        let mut missing: Vec<&AuditExample> = Vec::new();
        let mut pending = BTreeSet::new();
        for e in examples {
            if !st.scores.contains_key(&e.id) && pending.insert(e.id.as_str()) {
                missing.push(e);
            }
        }
        if !missing.is_empty() {
            let ids: Vec<&str> = missing.iter().map(|e| e.id.as_str()).collect();
            let got = st.oracle.score_batch(&missing)?;
            let got = check_response(&ids, got)?;
            st.forwarded += got.len();
            for r in got {
                st.scores.insert(r.id, r.score);
            }
        }
        Ok(examples
            .iter()
            .map(|e| ScoreRecord {
                id: e.id.clone(),
                score: st.scores[&e.id],
            })
            .collect())
    }
}

/// One run's view of a [`SharedCache`]. Counts the distinct ids this run asked
/// for, whether or not another run had already paid for them.
pub struct CacheClient {
    shared: Arc<SharedCache>,
    requested: BTreeSet<String>,
}

impl CacheClient {
    pub fn new(shared: Arc<SharedCache>) -> Self {
        CacheClient {
            shared,
            requested: BTreeSet::new(),
        }
    }

    pub fn distinct_requests(&self) -> usize {
        self.requested.len()
    }
}

impl ScoreOracle for CacheClient {
    fn score_batch(
        &mut self,
        examples: &[&AuditExample],
    ) -> Result<Vec<ScoreRecord>, BlackBoxError> {
        let out = self.shared.fetch(examples)?;
        self.requested.extend(examples.iter().map(|e| e.id.clone()));
        Ok(out)
    }
}
