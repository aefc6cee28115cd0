//! Sentence encoders and k-nearest-neighbour candidate pair generation.

mod knn;
mod tfidf;
mod wordvec;

use std::fmt;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{ResponseId, ResponseRecord};
use crate::error::{Error, Result};

pub use knn::{cosine_distance, generate_candidate_pairs, nearest_neighbors};
pub use tfidf::{Idf, TfidfEncoder};
pub use wordvec::{WordVectorEncoder, Weighting};

/// Maps a normalized response text to a dense vector of fixed dimension.
pub trait Encoder: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn encode(&self, text: &str) -> Vec<f64>;
}

/// Unordered response pair stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CandidatePair {
    pub a: ResponseId,
    pub b: ResponseId,
}

impl CandidatePair {
    /// Canonical pair, or `None` for a self-pair.
    pub fn new(x: ResponseId, y: ResponseId) -> Option<Self> {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Some(Self { a: x, b: y }),
            std::cmp::Ordering::Greater => Some(Self { a: y, b: x }),
            std::cmp::Ordering::Equal => None,
        }
    }
}

impl fmt::Display for CandidatePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

/// Encoder selection as written on the command line or in a config file:
/// `tfidf`, `wordvec:PATH` (uniform mean) or `wordvec-tfidf:PATH`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EncoderSpec {
    Tfidf,
    WordVec { path: PathBuf, tfidf_weighted: bool },
}

impl FromStr for EncoderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "tfidf" {
            return Ok(EncoderSpec::Tfidf);
        }
        if let Some(path) = s.strip_prefix("wordvec-tfidf:") {
            return Ok(EncoderSpec::WordVec {
                path: path.into(),
                tfidf_weighted: true,
            });
        }
        if let Some(path) = s.strip_prefix("wordvec:") {
            return Ok(EncoderSpec::WordVec {
                path: path.into(),
                tfidf_weighted: false,
            });
        }
        Err(Error::validation(format!(
            "unknown encoder {s:?}; expected tfidf, wordvec:PATH or wordvec-tfidf:PATH"
        )))
    }
}

impl TryFrom<String> for EncoderSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EncoderSpec> for String {
    fn from(spec: EncoderSpec) -> String {
        spec.to_string()
    }
}

impl fmt::Display for EncoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderSpec::Tfidf => f.write_str("tfidf"),
            EncoderSpec::WordVec {
                path,
                tfidf_weighted: false,
            } => write!(f, "wordvec:{}", path.display()),
            EncoderSpec::WordVec {
                path,
                tfidf_weighted: true,
            } => write!(f, "wordvec-tfidf:{}", path.display()),
        }
    }
}

impl EncoderSpec {
    pub fn build(&self, records: &[ResponseRecord]) -> Result<Box<dyn Encoder>> {
        Ok(match self {
            EncoderSpec::Tfidf => Box::new(TfidfEncoder::fit(records)?),
            EncoderSpec::WordVec {
                path,
                tfidf_weighted,
            } => {
                let weighting = if *tfidf_weighted {
                    Weighting::Tfidf(Idf::fit(records.iter().map(|r| r.text())))
                } else {
                    Weighting::Uniform
                };
                Box::new(WordVectorEncoder::load(path, weighting)?)
            }
        })
    }
}

pub fn write_pairs_tsv<'a, W, I>(mut w: W, pairs: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a CandidatePair>,
{
    for p in pairs {
        writeln!(w, "{}\t{}", p.a, p.b)?;
    }
    Ok(())
}

/// Parse `idA<TAB>idB` rows; ids must be canonical (`idA < idB`) and below
/// `n` when given.
pub fn read_pairs_tsv<R: BufRead>(
    reader: R,
    source_name: &str,
    n: Option<usize>,
) -> Result<std::collections::BTreeSet<CandidatePair>> {
    let mut out = std::collections::BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source_name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(Error::parse(source_name, lineno, "expected idA<TAB>idB"));
        }
        let a: ResponseId = cols[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(source_name, lineno, format!("bad id {:?}", cols[0])))?;
        let b: ResponseId = cols[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(source_name, lineno, format!("bad id {:?}", cols[1])))?;
        if a >= b {
            return Err(Error::parse(source_name, lineno, "pair is not canonical (idA < idB)"));
        }
        if let Some(n) = n {
            if b as usize >= n {
                return Err(Error::parse(source_name, lineno, format!("unknown response id {b}")));
            }
        }
        out.insert(CandidatePair { a, b });
    }
    Ok(out)
}
