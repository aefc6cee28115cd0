use std::collections::{BTreeMap, BTreeSet};

use super::Encoder;
use crate::corpus::ResponseRecord;
use crate::error::{Error, Result};

/// Inverse document frequencies `ln(N / df)` over whitespace tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Idf {
    docs: usize,
    idf: BTreeMap<String, f64>,
}

impl Idf {
    pub fn fit<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut n = 0usize;
        for doc in docs {
            n += 1;
            let distinct: BTreeSet<&str> = doc.split_whitespace().collect();
            for tok in distinct {
                *df.entry(tok.to_string()).or_default() += 1;
            }
        }
        let idf = df
            .into_iter()
            .map(|(tok, d)| (tok, (n as f64 / d as f64).ln()))
            .collect();
        Self { docs: n, idf }
    }

    pub fn get(&self, token: &str) -> Option<f64> {
        self.idf.get(token).copied()
    }

    pub fn num_docs(&self) -> usize {
        self.docs
    }

    pub fn len(&self) -> usize {
        self.idf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = (&str, f64)> {
        self.idf.iter().map(|(t, &v)| (t.as_str(), v))
    }
}

/// L2-normalized raw-count tf-idf over the vocabulary of the fitted records.
#[derive(Debug, Clone)]
pub struct TfidfEncoder {
    index: BTreeMap<String, usize>,
    weights: Vec<f64>,
}

impl TfidfEncoder {
    pub fn fit(records: &[ResponseRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("tf-idf fit records"));
        }
        Ok(Self::from_idf(&Idf::fit(records.iter().map(|r| r.text()))))
    }

    pub fn from_idf(idf: &Idf) -> Self {
        let mut index = BTreeMap::new();
        let mut weights = Vec::with_capacity(idf.len());
        for (i, (tok, w)) in idf.tokens().enumerate() {
            index.insert(tok.to_string(), i);
            weights.push(w);
        }
        Self { index, weights }
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.index.get(token).map(|&i| self.weights[i])
    }
}

impl Encoder for TfidfEncoder {
    fn name(&self) -> &str {
        "tfidf"
    }

    fn dimension(&self) -> usize {
        self.weights.len()
    }

    fn encode(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.weights.len()];
        for tok in text.split_whitespace() {
            if let Some(&i) = self.index.get(tok) {
                v[i] += self.weights[i];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PreprocessedResponse;

    pub(crate) fn records(texts: &[&str]) -> Vec<ResponseRecord> {
        texts
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
            .collect()
    }

    #[test]
    fn single_document_has_zero_idf() {
        let enc = TfidfEncoder::fit(&records(&["a b c"])).unwrap();
        assert_eq!(enc.encode("a b c"), vec![0.0; 3]);
    }

    #[test]
    fn two_document_df_table() {
        let enc = TfidfEncoder::fit(&records(&["a b", "a c"])).unwrap();
        assert_eq!(enc.idf("a"), Some(0.0));
        assert_eq!(enc.idf("b"), Some(2f64.ln()));
        assert_eq!(enc.idf("c"), Some(2f64.ln()));
        // "a b": only b carries weight -> unit vector on b
        assert_eq!(enc.encode("a b"), vec![0.0, 1.0, 0.0]);
        // "b c c": tf 1 and 2 times the same idf -> (1, 2)/sqrt(5)
        let v = enc.encode("b c c");
        assert!((v[1] - 1.0 / 5f64.sqrt()).abs() < 1e-15);
        assert!((v[2] - 2.0 / 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn oov_is_ignored_and_deterministic() {
        let enc = TfidfEncoder::fit(&records(&["a b", "a c", "d"])).unwrap();
        assert_eq!(enc.encode("zzz qqq"), vec![0.0; enc.dimension()]);
        assert_eq!(enc.encode("b zzz c"), enc.encode("b zzz c"));
    }

    #[test]
    fn empty_records_rejected() {
        assert!(TfidfEncoder::fit(&[]).is_err());
    }
}
