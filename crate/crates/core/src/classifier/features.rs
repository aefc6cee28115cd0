use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{DOCTOR_NAME, DOCTOR_START, PATIENT_NAME, PATIENT_START};
use crate::encode::WordVectorEncoder;
use crate::error::{Error, Result};

/// Sparse feature vector with a fixed dimension. Entries are sorted by index
/// and hold no explicit zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Entries may come in any order; duplicates are summed.
    pub fn new(dim: usize, entries: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut map: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in entries {
            if i as usize >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: i as usize + 1,
                });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("feature vector"));
            }
            *map.entry(i).or_default() += v;
        }
        Ok(Self {
            dim,
            entries: map.into_iter().filter(|&(_, v)| v != 0.0).collect(),
        })
    }

    pub fn from_dense(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), values.iter().enumerate().map(|(i, &v)| (i as u32, v)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FeatureMode {
    Tfidf,
    WordvecMean,
}

/// Frozen featurizer over assembled context tokens.
///
/// Two blocks of equal width: the whole context, and the tokens of the final
/// turn (after the last speaker marker). Each block is L2-normalized on its
/// own, so the most recent turn carries as much weight as the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "camelCase")]
pub enum FeatureExtractor {
    #[serde(rename_all = "camelCase")]
    Tfidf {
        vocabulary: Vec<String>,
        /// Smoothed idf `ln((1 + N) / (1 + df)) + 1`, aligned with `vocabulary`.
        idf: Vec<f64>,
        #[serde(skip)]
        index: HashMap<String, u32>,
    },
    #[serde(rename_all = "camelCase")]
    WordvecMean {
        dimension: usize,
        vocabulary: Vec<String>,
        vectors: Vec<Vec<f64>>,
        #[serde(skip)]
        index: HashMap<String, u32>,
    },
}

const SPECIAL_TOKENS: [&str; 4] = [PATIENT_START, DOCTOR_START, PATIENT_NAME, DOCTOR_NAME];

fn is_marker(tok: &str) -> bool {
    tok == PATIENT_START || tok == DOCTOR_START
}

/// Tokens after the last speaker marker.
fn last_turn(context: &[String]) -> &[String] {
    match context.iter().rposition(|t| is_marker(t)) {
        Some(p) => &context[p + 1..],
        None => context,
    }
}

fn build_index(vocabulary: &[String]) -> HashMap<String, u32> {
    vocabulary.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect()
}

fn normalize(block: &mut [(u32, f64)]) {
    let norm = block.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, v) in block.iter_mut() {
            *v /= norm;
        }
    }
}

impl FeatureExtractor {
    pub fn fit_tfidf<'a, I>(contexts: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut df: BTreeMap<String, usize> = SPECIAL_TOKENS.iter().map(|t| (t.to_string(), 0)).collect();
        let mut n = 0usize;
        for ctx in contexts {
            n += 1;
            let distinct: BTreeSet<&str> = ctx.iter().map(String::as_str).collect();
            for tok in distinct {
                *df.entry(tok.to_string()).or_default() += 1;
            }
        }
        if n == 0 {
            return Err(Error::Empty("training contexts"));
        }
        let (vocabulary, idf): (Vec<String>, Vec<f64>) = df
            .into_iter()
            .map(|(tok, d)| {
                let w = ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0;
                (tok, w)
            })
            .unzip();
        Ok(FeatureExtractor::Tfidf {
            index: build_index(&vocabulary),
            vocabulary,
            idf,
        })
    }

    /// Keep the vectors of training-context tokens found in `vectors`.
    pub fn fit_wordvec<'a, I>(contexts: I, vectors: &WordVectorEncoder) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        use crate::encode::Encoder;
        let mut seen = BTreeSet::new();
        let mut any = false;
        for ctx in contexts {
            any = true;
            seen.extend(ctx.iter().map(String::as_str));
        }
        if !any {
            return Err(Error::Empty("training contexts"));
        }
        let (vocabulary, vecs): (Vec<String>, Vec<Vec<f64>>) = seen
            .into_iter()
            .filter_map(|t| vectors.vector(t).map(|v| (t.to_string(), v.to_vec())))
            .unzip();
        Ok(FeatureExtractor::WordvecMean {
            dimension: vectors.dimension(),
            index: build_index(&vocabulary),
            vocabulary,
            vectors: vecs,
        })
    }

    pub fn mode(&self) -> FeatureMode {
        match self {
            FeatureExtractor::Tfidf { .. } => FeatureMode::Tfidf,
            FeatureExtractor::WordvecMean { .. } => FeatureMode::WordvecMean,
        }
    }

    pub fn vocabulary(&self) -> &[String] {
        match self {
            FeatureExtractor::Tfidf { vocabulary, .. } | FeatureExtractor::WordvecMean { vocabulary, .. } => {
                vocabulary
            }
        }
    }

    fn block_width(&self) -> usize {
        match self {
            FeatureExtractor::Tfidf { vocabulary, .. } => vocabulary.len(),
            FeatureExtractor::WordvecMean { dimension, .. } => *dimension,
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.block_width()
    }

    /// SHA-256 over the mode and vocabulary, used to pair a model with its
    /// featurizer.
    pub fn vocab_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{:?}\n", self.mode()).as_bytes());
        for tok in self.vocabulary() {
            h.update(tok.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    fn block(&self, tokens: &[String], offset: u32) -> Vec<(u32, f64)> {
        let mut block: Vec<(u32, f64)> = match self {
            FeatureExtractor::Tfidf { idf, index, .. } => {
                let mut tf: BTreeMap<u32, f64> = BTreeMap::new();
                for tok in tokens {
                    if let Some(&i) = index.get(tok) {
                        *tf.entry(i).or_default() += 1.0;
                    }
                }
                tf.into_iter().map(|(i, c)| (i + offset, c * idf[i as usize])).collect()
            }
            FeatureExtractor::WordvecMean {
                dimension,
                vectors,
                index,
                ..
            } => {
                let mut sum = vec![0.0; *dimension];
                let mut n = 0usize;
                for tok in tokens {
                    if let Some(&i) = index.get(tok) {
                        for (s, v) in sum.iter_mut().zip(&vectors[i as usize]) {
                            *s += v;
                        }
                        n += 1;
                    }
                }
                if n == 0 {
                    return Vec::new();
                }
                sum.into_iter()
                    .enumerate()
                    .map(|(j, s)| (j as u32 + offset, s / n as f64))
                    .collect()
            }
        };
        normalize(&mut block);
        block
    }

    pub fn extract(&self, context: &[String]) -> SparseVector {
        let width = self.block_width() as u32;
        let mut entries = self.block(context, 0);
        entries.extend(self.block(last_turn(context), width));
        entries.retain(|&(_, v)| v != 0.0);
        SparseVector {
            dim: self.dim(),
            entries,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut fx: Self = serde_json::from_str(s)?;
        match &mut fx {
            FeatureExtractor::Tfidf { vocabulary, idf, index } => {
                if vocabulary.len() != idf.len() {
                    return Err(Error::validation("vocabulary and idf lengths differ"));
                }
                *index = build_index(vocabulary);
            }
            FeatureExtractor::WordvecMean {
                dimension,
                vocabulary,
                vectors,
                index,
            } => {
                if vocabulary.len() != vectors.len() || vectors.iter().any(|v| v.len() != *dimension) {
                    return Err(Error::validation("word vectors do not match the vocabulary"));
                }
                *index = build_index(vocabulary);
            }
        }
        if fx.vocabulary().windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("vocabulary must be sorted and unique"));
        }
        Ok(fx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn sparse_vector_checks() {
        let v = SparseVector::new(4, [(2, 1.0), (0, 0.5), (2, 1.0), (1, 0.0)]).unwrap();
        assert_eq!(v.entries(), &[(0, 0.5), (2, 2.0)]);
        assert_eq!(v.to_dense(), vec![0.5, 0.0, 2.0, 0.0]);
        assert!(matches!(SparseVector::new(2, [(2, 1.0)]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(SparseVector::new(2, [(0, f64::NAN)]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn vocabulary_includes_special_tokens() {
        let ctx = [toks("<p_start> my head hurts")];
        let fx = FeatureExtractor::fit_tfidf(ctx.iter().map(Vec::as_slice)).unwrap();
        for t in SPECIAL_TOKENS {
            assert!(fx.vocabulary().iter().any(|v| v == t), "{t}");
        }
        assert_eq!(fx.dim(), 2 * fx.vocabulary().len());
    }

    #[test]
    fn blocks_are_unit_norm_and_last_turn_separate() {
        let train = [
            toks("<p_start> hi <d_start> hello <p_start> my head hurts"),
            toks("<p_start> thanks bye"),
        ];
        let fx = FeatureExtractor::fit_tfidf(train.iter().map(Vec::as_slice)).unwrap();
        let v = fx.extract(&train[0]);
        let w = fx.vocabulary().len() as u32;
        let (a, b): (Vec<_>, Vec<_>) = v.entries().iter().partition(|(i, _)| *i < w);
        let norm = |xs: &[&(u32, f64)]| xs.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        assert!((norm(&a) - 1.0).abs() < 1e-12);
        assert!((norm(&b) - 1.0).abs() < 1e-12);
        // last-turn block only holds "my head hurts"
        assert_eq!(b.len(), 3);
        // unseen tokens are ignored
        assert!(fx.extract(&toks("zzz qqq")).entries().is_empty());
    }

    #[test]
    fn json_round_trip_preserves_features() {
        let train = [toks("<p_start> a b <d_start> c"), toks("<p_start> b d")];
        let fx = FeatureExtractor::fit_tfidf(train.iter().map(Vec::as_slice)).unwrap();
        let back = FeatureExtractor::from_json(&fx.to_json().unwrap()).unwrap();
        assert_eq!(back.vocab_hash(), fx.vocab_hash());
        for ctx in &train {
            assert_eq!(back.extract(ctx), fx.extract(ctx));
        }
    }

    #[test]
    fn wordvec_mean_blocks() {
        let vectors = WordVectorEncoder::read(
            "take 1 0\ncare 0 1\n".as_bytes(),
            "v",
            crate::encode::Weighting::Uniform,
        )
        .unwrap();
        let train = [toks("<p_start> take <d_start> care")];
        let fx = FeatureExtractor::fit_wordvec(train.iter().map(Vec::as_slice), &vectors).unwrap();
        assert_eq!(fx.dim(), 4);
        let v = fx.extract(&train[0]).to_dense();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - h).abs() < 1e-12 && (v[1] - h).abs() < 1e-12);
        assert_eq!(&v[2..], &[0.0, 1.0]);
    }
}
