use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use super::{Encoder, Idf};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum Weighting {
    Uniform,
    /// Each in-vocabulary token occurrence is weighted by its idf; tokens
    /// without an idf entry are skipped.
    Tfidf(Idf),
}

/// Weighted mean of pretrained word vectors read from a text file with one
/// `token v1 ... vD` entry per line.
#[derive(Debug, Clone)]
pub struct WordVectorEncoder {
    name: String,
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    weighting: Weighting,
}

impl WordVectorEncoder {
    pub fn load(path: &Path, weighting: Weighting) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut enc = Self::read(
            std::io::BufReader::new(file),
            &path.display().to_string(),
            weighting,
        )?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("vectors");
        enc.name = match enc.weighting {
            Weighting::Uniform => format!("wordvec:{stem}"),
            Weighting::Tfidf(_) => format!("wordvec-tfidf:{stem}"),
        };
        Ok(enc)
    }

    pub fn read<R: BufRead>(reader: R, source_name: &str, weighting: Weighting) -> Result<Self> {
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(source_name, e))?;
            let lineno = i + 1;
            let mut fields = line.split(' ').filter(|f| !f.is_empty());
            let Some(token) = fields.next() else {
                continue;
            };
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(source_name, lineno, format!("bad component: {e}")))?;
            if values.is_empty() {
                return Err(Error::parse(source_name, lineno, "token without vector"));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(source_name, lineno, "non-finite component"));
            }
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::parse(
                        source_name,
                        lineno,
                        format!("dimension {} differs from {d}", values.len()),
                    ))
                }
                _ => {}
            }
            vectors.entry(token.to_string()).or_insert(values);
        }
        let dim = dim.ok_or(Error::Empty("word vector file"))?;
        Ok(Self {
            name: "wordvec".into(),
            dim,
            vectors,
            weighting,
        })
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vectors.len()
    }
}

impl Encoder for WordVectorEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        let mut total = 0.0;
        for tok in text.split_whitespace() {
            let Some(v) = self.vectors.get(tok) else {
                continue;
            };
            let w = match &self.weighting {
                Weighting::Uniform => 1.0,
                Weighting::Tfidf(idf) => match idf.get(tok) {
                    Some(w) => w,
                    None => continue,
                },
            };
            for (a, x) in acc.iter_mut().zip(v) {
                *a += w * x;
            }
            total += w;
        }
        if total > 0.0 {
            acc.iter_mut().for_each(|a| *a /= total);
        } else {
            acc.iter_mut().for_each(|a| *a = 0.0);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const VECTORS: &str = "take 1 0\ncare 0 1\nsoon 2 2\n";

    #[test]
    fn uniform_mean() {
        let enc = WordVectorEncoder::read(VECTORS.as_bytes(), "v", Weighting::Uniform).unwrap();
        assert_eq!(enc.dimension(), 2);
        assert_eq!(enc.encode("take care"), vec![0.5, 0.5]);
        assert_eq!(enc.encode("take zzz care"), vec![0.5, 0.5]);
        assert_eq!(enc.encode("zzz"), vec![0.0, 0.0]);
    }

    #[test]
    fn tfidf_weighted_mean() {
        // idf(take) = ln(2/2) = 0, idf(care) = ln 2
        let idf = Idf::fit(["take care", "take soon"]);
        let enc = WordVectorEncoder::read(VECTORS.as_bytes(), "v", Weighting::Tfidf(idf)).unwrap();
        assert_eq!(enc.encode("take care"), vec![0.0, 1.0]);
        // only zero-weight tokens -> zero vector
        assert_eq!(enc.encode("take"), vec![0.0, 0.0]);
    }

    #[test]
    fn load_errors_carry_line_numbers() {
        let bad_dim = "a 1 2\nb 1 2 3\n";
        match WordVectorEncoder::read(bad_dim.as_bytes(), "v", Weighting::Uniform) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let bad_num = "a 1 2\nb 1 x\n";
        assert!(matches!(
            WordVectorEncoder::read(bad_num.as_bytes(), "v", Weighting::Uniform),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(WordVectorEncoder::read("".as_bytes(), "v", Weighting::Uniform).is_err());
    }
}
