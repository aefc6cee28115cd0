use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;

use super::{CandidatePair, Encoder};
use crate::corpus::ResponseRecord;
use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `1 - cos(a, b)`; `None` when either vector is zero.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(1.0 - dot(a, b) / (na * nb))
}

/// Exact k nearest neighbours (cosine) of every non-zero vector among the
/// other non-zero vectors. Ties go to the smaller index. Zero vectors get no
/// neighbours and are nobody's neighbour.
pub fn nearest_neighbors(vectors: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    let norms: Vec<f64> = vectors.iter().map(|v| norm(v)).collect();
    let live: Vec<usize> = (0..vectors.len()).filter(|&i| norms[i] > 0.0).collect();
    (0..vectors.len())
        .into_par_iter()
        .map(|q| {
            if norms[q] == 0.0 || k == 0 {
                return Vec::new();
            }
            let mut cands: Vec<(f64, usize)> = live
                .iter()
                .filter(|&&s| s != q)
                .map(|&s| (1.0 - dot(&vectors[q], &vectors[s]) / (norms[q] * norms[s]), s))
                .collect();
            let by_dist = |x: &(f64, usize), y: &(f64, usize)| -> Ordering {
                x.0.total_cmp(&y.0).then(x.1.cmp(&y.1))
            };
            if cands.len() > k {
                cands.select_nth_unstable_by(k - 1, by_dist);
                cands.truncate(k);
            }
            cands.sort_by(by_dist);
            cands.into_iter().map(|(_, s)| s).collect()
        })
        .collect()
}

/// Union over encoders and responses of each response's `k` nearest
/// neighbours, as canonical pairs.
pub fn generate_candidate_pairs(
    records: &[ResponseRecord],
    encoders: &[&dyn Encoder],
    k: usize,
) -> Result<BTreeSet<CandidatePair>> {
    if k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    if records.len() < 2 {
        return Err(Error::validation("need at least two responses"));
    }
    if encoders.is_empty() {
        return Err(Error::validation("need at least one encoder"));
    }
    let mut pairs = BTreeSet::new();
    for enc in encoders {
        let vectors: Vec<Vec<f64>> = records.par_iter().map(|r| enc.encode(r.text())).collect();
        if let Some(v) = vectors.iter().find(|v| v.len() != enc.dimension()) {
            return Err(Error::DimensionMismatch {
                expected: enc.dimension(),
                got: v.len(),
            });
        }
        for (q, neighbours) in nearest_neighbors(&vectors, k).into_iter().enumerate() {
            for s in neighbours {
                let pair = CandidatePair::new(records[q].id, records[s].id)
                    .expect("records carry distinct ids");
                pairs.insert(pair);
            }
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PreprocessedResponse;
    use crate::encode::TfidfEncoder;
    use proptest::prelude::*;

    struct Lookup(Vec<Vec<f64>>, std::collections::HashMap<String, usize>);

    impl Lookup {
        fn new(vectors: Vec<Vec<f64>>) -> (Self, Vec<ResponseRecord>) {
            let records: Vec<ResponseRecord> = (0..vectors.len())
                .map(|i| ResponseRecord {
                    id: i as u32,
                    response: PreprocessedResponse {
                        normalized_text: format!("r{i}"),
                        source_texts: Default::default(),
                        count: 2,
                    },
                })
                .collect();
            let map = records.iter().map(|r| (r.text().to_string(), r.id as usize)).collect();
            (Self(vectors, map), records)
        }
    }

    impl Encoder for Lookup {
        fn name(&self) -> &str {
            "lookup"
        }
        fn dimension(&self) -> usize {
            self.0[0].len()
        }
        fn encode(&self, text: &str) -> Vec<f64> {
            self.0[self.1[text]].clone()
        }
    }

    /// All-pairs distance table, full sort per row.
    fn oracle(vectors: &[Vec<f64>], k: usize) -> BTreeSet<(u32, u32)> {
        let n = vectors.len();
        let mut out = BTreeSet::new();
        for q in 0..n {
            let mut row: Vec<(f64, usize)> = Vec::new();
            for s in 0..n {
                if s == q {
                    continue;
                }
                let qq: f64 = vectors[q].iter().map(|x| x * x).sum();
                let ss: f64 = vectors[s].iter().map(|x| x * x).sum();
                if qq == 0.0 || ss == 0.0 {
                    continue;
                }
                let qs: f64 = vectors[q].iter().zip(&vectors[s]).map(|(a, b)| a * b).sum();
                row.push((1.0 - qs / (qq.sqrt() * ss.sqrt()), s));
            }
            row.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            for &(_, s) in row.iter().take(k) {
                out.insert((q.min(s) as u32, q.max(s) as u32));
            }
        }
        out
    }

    #[test]
    fn self_distance_is_zero() {
        let v = vec![0.3, -1.2, 4.0];
        assert!(cosine_distance(&v, &v).unwrap().abs() < 1e-12);
        assert_eq!(cosine_distance(&v, &[0.0; 3]), None);
    }

    #[test]
    fn saturated_neighbourhood_gives_all_pairs() {
        let (enc, recs) = Lookup::new(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![-1.0, 0.5],
        ]);
        let pairs = generate_candidate_pairs(&recs, &[&enc], 3).unwrap();
        assert_eq!(pairs.len(), 6);
    }

    #[test]
    fn zero_vectors_are_excluded() {
        let (enc, recs) = Lookup::new(vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.5, 0.5]]);
        let pairs = generate_candidate_pairs(&recs, &[&enc], 5).unwrap();
        assert_eq!(pairs.into_iter().collect::<Vec<_>>(), [CandidatePair { a: 0, b: 2 }]);
    }

    #[test]
    fn ties_prefer_smaller_id() {
        // 1, 2 and 3 are all at the same distance from 0
        let (enc, _) = Lookup::new(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 2.0],
            vec![0.0, 3.0],
        ]);
        let nn = nearest_neighbors(&(0..4).map(|i| enc.encode(&format!("r{i}"))).collect::<Vec<_>>(), 1);
        assert_eq!(nn[0], [1]);
    }

    #[test]
    fn six_response_toy_corpus_matches_oracle() {
        let texts = [
            "how long have you had the symptoms",
            "how long have you had these symptoms",
            "take care",
            "take care and feel better",
            "please send a photo",
            "can you send a photo of the rash",
        ];
        let recs: Vec<ResponseRecord> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| ResponseRecord {
                id: i as u32,
                response: PreprocessedResponse {
                    normalized_text: (*t).into(),
                    source_texts: Default::default(),
                    count: 2,
                },
            })
            .collect();
        let enc = TfidfEncoder::fit(&recs).unwrap();
        let vectors: Vec<Vec<f64>> = texts.iter().map(|t| enc.encode(t)).collect();
        for k in 1..6 {
            let got: BTreeSet<(u32, u32)> = generate_candidate_pairs(&recs, &[&enc], k)
                .unwrap()
                .into_iter()
                .map(|p| (p.a, p.b))
                .collect();
            assert_eq!(got, oracle(&vectors, k), "k = {k}");
        }
        let k1: Vec<_> = generate_candidate_pairs(&recs, &[&enc], 1).unwrap().into_iter().collect();
        assert!(k1.contains(&CandidatePair { a: 0, b: 1 }));
        assert!(k1.contains(&CandidatePair { a: 2, b: 3 }));
    }

    fn vectors_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..30, 1usize..5).prop_flat_map(|(n, d)| {
            prop::collection::vec(
                prop::collection::vec(prop_oneof![Just(0.0), (-3i32..4).prop_map(f64::from), -1.0f64..1.0], d),
                n,
            )
        })
    }

    proptest! {
        #[test]
        fn matches_bruteforce_and_bounds(vs in vectors_strategy(), k in 1usize..6) {
            let (enc, recs) = Lookup::new(vs.clone());
            let got: BTreeSet<(u32, u32)> = generate_candidate_pairs(&recs, &[&enc], k)
                .unwrap()
                .into_iter()
                .map(|p| (p.a, p.b))
                .collect();
            prop_assert!(got.len() <= recs.len() * k);
            prop_assert!(got.iter().all(|(a, b)| a < b));
            prop_assert_eq!(got, oracle(&vs, k));
        }

        #[test]
        fn monotone_in_k_and_encoders(vs in vectors_strategy(), ws in vectors_strategy(), k in 1usize..5) {
            let n = vs.len().min(ws.len());
            let (e1, recs) = Lookup::new(vs[..n].to_vec());
            let (e2, _) = Lookup::new(ws[..n].to_vec());
            let small = generate_candidate_pairs(&recs, &[&e1], k).unwrap();
            let bigger_k = generate_candidate_pairs(&recs, &[&e1], k + 1).unwrap();
            let more_enc = generate_candidate_pairs(&recs, &[&e1, &e2], k).unwrap();
            prop_assert!(small.is_subset(&bigger_k));
            prop_assert!(small.is_subset(&more_enc));
        }
    }
}
