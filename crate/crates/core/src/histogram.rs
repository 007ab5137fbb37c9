//! Label histogram with exponential forgetting.
//!
//! The clock advances by one per observed item. Counts are decayed lazily:
//! each entry remembers the tick it was last written at and is scaled by
//! `exp(-lambda * elapsed)` whenever it is read.

use crate::error::{Error, Result};
use crate::hash::LabelMap;
use crate::wl::Label;

pub const DEFAULT_PRUNE_EPS: f64 = 1e-6;

/// Full sweeps of stale entries happen at most this often (in ticks).
const SWEEP_INTERVAL: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    count: f64,
    last_touch: u64,
}

#[derive(Debug, Clone)]
pub struct DecayedHistogram {
    entries: LabelMap<Entry>,
    clock: u64,
    lambda: f64,
    prune_eps: f64,
}

impl DecayedHistogram {
    pub fn new(lambda: f64) -> Result<Self> {
        Self::with_prune_eps(lambda, DEFAULT_PRUNE_EPS)
    }

    pub fn with_prune_eps(lambda: f64, prune_eps: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "decay factor must be finite and >= 0, got {lambda}"
            )));
        }
        if !(prune_eps > 0.0) {
            return Err(Error::InvalidArgument("prune epsilon must be > 0".into()));
        }
        Ok(DecayedHistogram {
            entries: LabelMap::default(),
            clock: 0,
            lambda,
            prune_eps,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Number of stored entries, possibly including some that have decayed
    /// below the pruning threshold but were not swept yet.
    pub fn stored_len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    fn decayed(&self, e: &Entry) -> f64 {
        if self.lambda == 0.0 {
            e.count
        } else {
            e.count * (-self.lambda * (self.clock - e.last_touch) as f64).exp()
        }
    }

    /// Advances the clock by one tick and adds one unit of weight to `label`.
    /// Returns the label's new count.
    pub fn observe(&mut self, label: Label) -> f64 {
        self.clock += 1;
        let clock = self.clock;
        let lambda = self.lambda;
        let eps = self.prune_eps;
        let entry = self.entries.entry(label).or_insert(Entry {
            count: 0.0,
            last_touch: clock,
        });
        let mut prior = if lambda == 0.0 {
            entry.count
        } else {
            entry.count * (-lambda * (clock - entry.last_touch) as f64).exp()
        };
        if prior < eps {
            prior = 0.0;
        }
        entry.count = prior + 1.0;
        entry.last_touch = clock;
        let count = entry.count;
        if lambda > 0.0 && clock % SWEEP_INTERVAL == 0 {
            self.sweep();
        }
        count
    }

    /// Drops every entry whose decayed count fell below the pruning threshold.
    pub fn sweep(&mut self) {
        let clock = self.clock;
        let lambda = self.lambda;
        let eps = self.prune_eps;
        self.entries.retain(|_, e| {
            let c = if lambda == 0.0 {
                e.count
            } else {
                e.count * (-lambda * (clock - e.last_touch) as f64).exp()
            };
            c >= eps
        });
    }

    /// Count of `label` decayed to the current clock; 0 if absent or pruned.
    pub fn read(&self, label: Label) -> f64 {
        match self.entries.get(&label) {
            Some(e) => {
                let c = self.decayed(e);
                if c < self.prune_eps {
                    0.0
                } else {
                    c
                }
            }
            None => 0.0,
        }
    }

    /// All live `(label, count)` pairs at the current clock, sorted by label.
    pub fn counts(&self) -> Vec<(Label, f64)> {
        let mut out: Vec<(Label, f64)> = self
            .entries
            .iter()
            .map(|(&h, e)| (h, self.decayed(e)))
            .filter(|&(_, c)| c >= self.prune_eps)
            .collect();
        out.sort_unstable_by_key(|&(h, _)| h);
        out
    }

    pub fn is_empty(&self) -> bool {
        self.counts().is_empty()
    }

    /// Probability vector over live labels, sorted by label.
    pub fn normalize(&self) -> Result<NormalizedHistogram> {
        NormalizedHistogram::from_counts(self.counts())
    }
}

/// Histogram whose weights sum to one, sorted by label.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedHistogram(Vec<(Label, f64)>);

impl NormalizedHistogram {
    /// Normalizes arbitrary positive weights. Duplicate labels are merged.
    pub fn from_counts(mut counts: Vec<(Label, f64)>) -> Result<Self> {
        counts.retain(|&(_, c)| c > 0.0);
        if counts.is_empty() {
            return Err(Error::EmptyHistogram);
        }
        counts.sort_unstable_by_key(|&(h, _)| h);
        counts.dedup_by(|next, kept| {
            if next.0 == kept.0 {
                kept.1 += next.1;
                true
            } else {
                false
            }
        });
        let total: f64 = counts.iter().map(|&(_, c)| c).sum();
        for (_, c) in counts.iter_mut() {
            *c /= total;
        }
        Ok(NormalizedHistogram(counts))
    }

    /// Wraps weights that are claimed to already sum to one.
    pub fn from_normalized(mut weights: Vec<(Label, f64)>) -> Result<Self> {
        let total: f64 = weights.iter().map(|&(_, c)| c).sum();
        if (total - 1.0).abs() > 1e-9 || weights.iter().any(|&(_, c)| c < 0.0) {
            return Err(Error::NotNormalized(total));
        }
        weights.sort_unstable_by_key(|&(h, _)| h);
        Ok(NormalizedHistogram(weights))
    }

    pub fn weights(&self) -> &[(Label, f64)] {
        &self.0
    }

    pub fn get(&self, label: Label) -> f64 {
        self.0
            .binary_search_by_key(&label, |&(h, _)| h)
            .map(|i| self.0[i].1)
            .unwrap_or(0.0)
    }
}
