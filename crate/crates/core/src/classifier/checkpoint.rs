use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClassifierModel, FeatureExtractor};
use crate::error::{Error, Result};

const MAGIC_LINE: &str = "replybank-model 1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Header {
    num_classes: usize,
    feature_dim: usize,
    t: f64,
    threshold: f64,
    bank_version: u64,
    vocab_hash: String,
}

/// Model file: a magic line, one line of JSON header, then the weights
/// (row-major) and biases as little-endian f64.
pub fn write_model<W: Write>(mut w: W, model: &ClassifierModel) -> Result<()> {
    model.validate()?;
    let header = Header {
        num_classes: model.num_classes,
        feature_dim: model.feature_dim,
        t: model.t,
        threshold: model.threshold,
        bank_version: model.bank_version,
        vocab_hash: model.vocab_hash.clone(),
    };
    let io = |e| Error::io("model", e);
    writeln!(w, "{MAGIC_LINE}").map_err(io)?;
    writeln!(w, "{}", serde_json::to_string(&header)?).map_err(io)?;
    let mut buf = Vec::with_capacity(8 * (model.weights.len() + model.bias.len()));
    for v in model.weights.iter().chain(&model.bias) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_model<R: BufRead>(mut r: R, source_name: &str) -> Result<ClassifierModel> {
    let io = |e| Error::io(source_name, e);
    let mut line = String::new();
    r.read_line(&mut line).map_err(io)?;
    if line.trim_end() != MAGIC_LINE {
        return Err(Error::parse(source_name, 1, "not a model checkpoint"));
    }
    line.clear();
    r.read_line(&mut line).map_err(io)?;
    let h: Header = serde_json::from_str(line.trim_end()).map_err(|e| Error::parse(source_name, 2, e.to_string()))?;
    let n = h
        .num_classes
        .checked_mul(h.feature_dim)
        .and_then(|w| w.checked_add(h.num_classes))
        .ok_or_else(|| Error::validation(format!("{source_name}: parameter count overflows")))?;
    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(io)?;
    if body.len() != 8 * n {
        return Err(Error::validation(format!(
            "{source_name}: expected {} parameter bytes, found {}",
            8 * n,
            body.len()
        )));
    }
    let mut values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let bias = values.split_off(h.num_classes * h.feature_dim);
    let model = ClassifierModel {
        num_classes: h.num_classes,
        feature_dim: h.feature_dim,
        weights: values,
        bias,
        t: h.t,
        threshold: h.threshold,
        bank_version: h.bank_version,
        vocab_hash: h.vocab_hash,
    };
    model.validate()?;
    Ok(model)
}

/// Path of the featurizer stored next to a model file.
pub fn features_path(model_path: &Path) -> PathBuf {
    let mut s = model_path.as_os_str().to_os_string();
    s.push(".features.json");
    PathBuf::from(s)
}

/// A model with the featurizer it was trained on.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ClassifierModel,
    pub extractor: FeatureExtractor,
}

impl Checkpoint {
    pub fn new(model: ClassifierModel, extractor: FeatureExtractor) -> Result<Self> {
        if model.vocab_hash != extractor.vocab_hash() {
            return Err(Error::validation("model and featurizer vocabularies differ"));
        }
        if model.feature_dim != extractor.dim() {
            return Err(Error::DimensionMismatch {
                expected: extractor.dim(),
                got: model.feature_dim,
            });
        }
        Ok(Self { model, extractor })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let fpath = features_path(path);
        std::fs::write(&fpath, self.extractor.to_json()?).map_err(|e| Error::io(&fpath, e))?;
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_model(std::io::BufWriter::new(f), &self.model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let model = read_model(std::io::BufReader::new(f), &path.display().to_string())?;
        let fpath = features_path(path);
        let json = std::fs::read_to_string(&fpath).map_err(|e| Error::io(&fpath, e))?;
        Self::new(model, FeatureExtractor::from_json(&json)?)
    }
}
