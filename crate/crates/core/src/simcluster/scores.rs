use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{ResponseId, ResponseRecord};
use crate::encode::CandidatePair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub pair: CandidatePair,
    pub prob_similar: f64,
}

/// Read `idA<TAB>idB<TAB>probSimilar` rows for a subset of `candidates`.
/// Candidate pairs without a row stay at the default distance.
pub fn load_scores<R: BufRead>(
    reader: R,
    source_name: &str,
    candidates: &BTreeSet<CandidatePair>,
    num_responses: usize,
) -> Result<Vec<SimilarityScore>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source_name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let bad = |msg: String| Error::parse(source_name, row, msg);
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(bad(format!("expected 3 columns, found {}", cols.len())));
        }
        let a: ResponseId = cols[0].parse().map_err(|_| bad(format!("bad id {:?}", cols[0])))?;
        let b: ResponseId = cols[1].parse().map_err(|_| bad(format!("bad id {:?}", cols[1])))?;
        let p: f64 = cols[2]
            .parse()
            .map_err(|_| bad(format!("bad probability {:?}", cols[2])))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(bad(format!("probability {p} outside [0, 1]")));
        }
        if a as usize >= num_responses || b as usize >= num_responses {
            return Err(bad(format!("unknown response id in ({a}, {b})")));
        }
        if a >= b {
            return Err(bad(format!("pair ({a}, {b}) is not canonical")));
        }
        let pair = CandidatePair { a, b };
        if !candidates.contains(&pair) {
            return Err(bad(format!("pair {pair} is not a candidate pair")));
        }
        if !seen.insert(pair) {
            return Err(bad(format!("duplicate score for {pair}")));
        }
        out.push(SimilarityScore {
            pair,
            prob_similar: p,
        });
    }
    Ok(out)
}

pub fn write_scores_tsv<W: Write>(mut w: W, scores: &[SimilarityScore]) -> std::io::Result<()> {
    for s in scores {
        writeln!(w, "{}\t{}\t{}", s.pair.a, s.pair.b, s.prob_similar)?;
    }
    Ok(())
}

/// Token-set Jaccard similarity; two empty texts score 0.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let sa: BTreeSet<&str> = a.split_whitespace().collect();
    let sb: BTreeSet<&str> = b.split_whitespace().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Built-in scorer used when no external similarity model is available.
pub fn jaccard_scores<'a, I>(records: &[ResponseRecord], pairs: I) -> Result<Vec<SimilarityScore>>
where
    I: IntoIterator<Item = &'a CandidatePair>,
{
    pairs
        .into_iter()
        .map(|&pair| {
            let text = |id: ResponseId| {
                records
                    .get(id as usize)
                    .filter(|r| r.id == id)
                    .map(|r| r.text())
                    .ok_or_else(|| Error::validation(format!("unknown response id {id}")))
            };
            Ok(SimilarityScore {
                pair,
                prob_similar: jaccard(text(pair.a)?, text(pair.b)?),
            })
        })
        .collect()
}
