use std::collections::HashMap;

use super::SimilarityScore;
use crate::corpus::ResponseId;
use crate::encode::CandidatePair;
use crate::error::{Error, Result};

/// Sparse symmetric dissimilarities. Only scored pairs are stored; every
/// other off-diagonal entry is implicitly 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: HashMap<CandidatePair, f64>,
}

impl DistanceMatrix {
    pub const DEFAULT_DISTANCE: f64 = 1.0;

    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: HashMap::new(),
        }
    }

    /// `D = 1 - probSimilar` for each score.
    pub fn build(n: usize, scores: &[SimilarityScore]) -> Result<Self> {
        let mut m = Self::new(n);
        for s in scores {
            if !(0.0..=1.0).contains(&s.prob_similar) {
                return Err(Error::validation(format!(
                    "probability {} for {} outside [0, 1]",
                    s.prob_similar, s.pair
                )));
            }
            m.insert(s.pair, 1.0 - s.prob_similar)?;
        }
        Ok(m)
    }

    /// Store a raw distance in `[0, 1]`.
    pub fn insert(&mut self, pair: CandidatePair, distance: f64) -> Result<()> {
        if pair.a >= pair.b || pair.b as usize >= self.n {
            return Err(Error::validation(format!(
                "pair {pair} invalid for {} responses",
                self.n
            )));
        }
        if !(0.0..=1.0).contains(&distance) {
            return Err(Error::validation(format!("distance {distance} outside [0, 1]")));
        }
        if self.entries.insert(pair, distance).is_some() {
            return Err(Error::validation(format!("duplicate pair {pair}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn stored(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: ResponseId, j: ResponseId) -> f64 {
        match CandidatePair::new(i, j) {
            None => 0.0,
            Some(p) => self
                .entries
                .get(&p)
                .copied()
                .unwrap_or(Self::DEFAULT_DISTANCE),
        }
    }

    /// Stored entries in canonical pair order.
    pub fn entries(&self) -> Vec<(CandidatePair, f64)> {
        let mut v: Vec<_> = self.entries.iter().map(|(&p, &d)| (p, d)).collect();
        v.sort_by_key(|(p, _)| *p);
        v
    }
}
