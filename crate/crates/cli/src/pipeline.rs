//! End-to-end run from a corpus to an evaluated model, driven by a TOML
//! config. Every stage records a key (its parameters plus the checksums of
//! its inputs) and the checksums of its outputs in `manifest.json`; a stage
//! whose key and outputs still match is skipped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use replybank_core::classifier::{Calibration, TrainConfig};
use replybank_core::corpus::ContextConfig;
use replybank_core::encode::EncoderSpec;
use replybank_core::simcluster::DEFAULT_THRESHOLD;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Invalid, StageError};
use crate::stages::{self, read_json, sha256_file, write_json, EvalOptions, EvalReport, IngestReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidatesSection {
    pub encoders: Vec<EncoderSpec>,
    pub k: usize,
}

impl Default for CandidatesSection {
    fn default() -> Self {
        Self {
            encoders: vec![EncoderSpec::Tfidf],
            k: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub threshold: f64,
    /// `idA idB probSimilar` rows from an external similarity model.
    pub scores: Option<PathBuf>,
    /// Top-k used for the coverage figure in the cluster report.
    pub report_top_k: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            scores: None,
            report_top_k: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankSection {
    /// Curated merge decisions replayed onto an empty bank; one class per
    /// cluster when absent.
    pub decisions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextSection {
    pub max_turns: usize,
    pub max_tokens: usize,
}

impl Default for ContextSection {
    fn default() -> Self {
        let c = ContextConfig::default();
        Self {
            max_turns: c.max_turns,
            max_tokens: c.max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub validation_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            validation_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub t: f64,
    /// Target coverage for the opt-out threshold; mean confidence when unset.
    pub opt_out_coverage: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            t: t.t,
            opt_out_coverage: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub curve_steps: usize,
    pub unique_samples: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            curve_steps: 20,
            unique_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub candidates: CandidatesSection,
    pub cluster: ClusterSection,
    pub bank: BankSection,
    pub context: ContextSection,
    pub split: SplitSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Make relative paths relative to `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.cluster.scores.as_mut() {
            fix(p);
        }
        if let Some(p) = self.bank.decisions.as_mut() {
            fix(p);
        }
        for e in &mut self.candidates.encoders {
            if let EncoderSpec::WordVec { path, .. } = e {
                fix(path);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.encoders.is_empty() {
            return Err(invalid("candidates.encoders is empty"));
        }
        if self.candidates.k == 0 {
            return Err(invalid("candidates.k must be at least 1"));
        }
        if !(self.cluster.threshold > 0.0 && self.cluster.threshold < 1.0) {
            return Err(invalid(format!("cluster.threshold {} outside (0, 1)", self.cluster.threshold)));
        }
        if self.context.max_turns == 0 || self.context.max_tokens == 0 {
            return Err(invalid("context limits must be positive"));
        }
        if !(0.0..1.0).contains(&self.split.validation_fraction) {
            return Err(invalid(format!(
                "split.validation_fraction {} outside [0, 1)",
                self.split.validation_fraction
            )));
        }
        if let Some(c) = self.train.opt_out_coverage {
            if !(c > 0.0 && c <= 1.0) {
                return Err(invalid(format!("train.opt_out_coverage {c} outside (0, 1]")));
            }
        }
        self.train_config().validate().map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            seed: self.seed,
            t: self.train.t,
        }
    }

    pub fn context_config(&self) -> ContextConfig {
        ContextConfig {
            max_turns: self.context.max_turns,
            max_tokens: self.context.max_tokens,
        }
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageRecord {
    pub stage: String,
    pub key: String,
    pub outputs: BTreeMap<String, String>,
}

/// Deterministic record of a run: no timestamps, no host details.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub config_hash: String,
    pub corpus_sha256: String,
    pub stages: Vec<StageRecord>,
}

pub const MANIFEST: &str = "manifest.json";

pub const STAGES: [&str; 9] = [
    "ingest",
    "candidates",
    "score",
    "cluster",
    "bank",
    "extract",
    "split",
    "train",
    "eval",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    /// Stage name and whether it ran (false when it was already fresh).
    pub stages: Vec<(&'static str, bool)>,
    pub eval: EvalReport,
    pub manifest: Manifest,
}

struct Stage {
    name: &'static str,
    params: Value,
    /// Files read, both artifacts of earlier stages and external inputs.
    inputs: Vec<PathBuf>,
    outputs: Vec<&'static str>,
}

fn stage_key(stage: &Stage, workdir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    h.update(stage.name.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(&stage.params)?);
    for input in &stage.inputs {
        // inputs inside the workdir are named relative to it so the key does
        // not depend on where the workdir lives
        let name = input.strip_prefix(workdir).unwrap_or(input);
        h.update([0]);
        h.update(name.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(sha256_file(input)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

fn fresh(previous: Option<&StageRecord>, key: &str, workdir: &Path) -> bool {
    let Some(prev) = previous else { return false };
    prev.key == key
        && prev
            .outputs
            .iter()
            .all(|(name, sum)| sha256_file(&workdir.join(name)).is_ok_and(|s| &s == sum))
}

fn stages(cfg: &PipelineConfig, corpus: &Path, w: &Path) -> Vec<Stage> {
    let f = |n: &str| w.join(n);
    let mut score_inputs = vec![f("responses.tsv"), f("pairs.tsv")];
    score_inputs.extend(cfg.cluster.scores.clone());
    let mut bank_inputs = vec![f("clusters.json"), f("responses.tsv")];
    bank_inputs.extend(cfg.bank.decisions.clone());
    let mut candidate_inputs = vec![f("responses.tsv")];
    for e in &cfg.candidates.encoders {
        if let EncoderSpec::WordVec { path, .. } = e {
            candidate_inputs.push(path.clone());
        }
    }
    vec![
        Stage {
            name: "ingest",
            params: json!({}),
            inputs: vec![corpus.to_path_buf()],
            outputs: vec!["responses.tsv", "ingest.json"],
        },
        Stage {
            name: "candidates",
            params: json!({"encoders": cfg.candidates.encoders, "k": cfg.candidates.k}),
            inputs: candidate_inputs,
            outputs: vec!["pairs.tsv"],
        },
        Stage {
            name: "score",
            params: json!({"external": cfg.cluster.scores.is_some()}),
            inputs: score_inputs,
            outputs: vec!["scores.tsv"],
        },
        Stage {
            name: "cluster",
            params: json!({"threshold": cfg.cluster.threshold, "reportTopK": cfg.cluster.report_top_k}),
            inputs: vec![f("responses.tsv"), f("pairs.tsv"), f("scores.tsv"), f("ingest.json")],
            outputs: vec!["clusters.json", "clusters_report.json"],
        },
        Stage {
            name: "bank",
            params: json!({"curated": cfg.bank.decisions.is_some()}),
            inputs: bank_inputs,
            outputs: vec!["bank.json"],
        },
        Stage {
            name: "extract",
            params: json!({"maxTurns": cfg.context.max_turns, "maxTokens": cfg.context.max_tokens}),
            inputs: vec![corpus.to_path_buf(), f("bank.json"), f("responses.tsv")],
            outputs: vec!["examples.bin", "extract.json"],
        },
        Stage {
            name: "split",
            params: json!({"seed": cfg.seed, "validationFraction": cfg.split.validation_fraction}),
            inputs: vec![f("examples.bin")],
            outputs: vec!["train.bin", "validation.bin", "split.json"],
        },
        Stage {
            name: "train",
            params: json!({"train": cfg.train_config(), "optOutCoverage": cfg.train.opt_out_coverage}),
            inputs: vec![f("train.bin"), f("validation.bin"), f("bank.json")],
            outputs: vec!["model.ckpt", "model.ckpt.features.json", "train.json"],
        },
        Stage {
            name: "eval",
            params: json!({
                "curveSteps": cfg.eval.curve_steps,
                "uniqueSamples": cfg.eval.unique_samples,
                "seed": cfg.seed,
            }),
            inputs: vec![
                f("model.ckpt"),
                f("model.ckpt.features.json"),
                f("validation.bin"),
                f("train.bin"),
                f("bank.json"),
            ],
            outputs: vec!["eval.json", "curve.csv"],
        },
    ]
}

fn run_stage(name: &str, cfg: &PipelineConfig, corpus: &Path, w: &Path) -> Result<()> {
    let f = |n: &str| w.join(n);
    match name {
        "ingest" => {
            let report = stages::ingest(corpus, &f("responses.tsv"))?;
            write_json(&f("ingest.json"), &report)?;
        }
        "candidates" => {
            stages::candidates(&f("responses.tsv"), &cfg.candidates.encoders, cfg.candidates.k, &f("pairs.tsv"))?;
        }
        "score" => {
            stages::score_pairs(
                &f("responses.tsv"),
                &f("pairs.tsv"),
                cfg.cluster.scores.as_deref(),
                &f("scores.tsv"),
            )?;
        }
        "cluster" => {
            stages::cluster(
                &f("responses.tsv"),
                &f("pairs.tsv"),
                Some(&f("scores.tsv")),
                cfg.cluster.threshold,
                &f("clusters.json"),
            )?;
            let ingest: IngestReport = read_json(&f("ingest.json"))?;
            let report = stages::clusters_report(
                &f("clusters.json"),
                &f("responses.tsv"),
                ingest.doctor_turns,
                cfg.cluster.report_top_k,
            )?;
            write_json(&f("clusters_report.json"), &report)?;
        }
        "bank" => {
            match &cfg.bank.decisions {
                Some(d) => stages::bank_replay(&f("clusters.json"), &f("responses.tsv"), None, d, &f("bank.json"))?,
                None => stages::bank_auto(&f("clusters.json"), &f("responses.tsv"), &f("bank.json"))?,
            };
        }
        "extract" => {
            let report = stages::extract(
                corpus,
                &f("bank.json"),
                &f("responses.tsv"),
                cfg.context_config(),
                &f("examples.bin"),
            )?;
            write_json(&f("extract.json"), &report)?;
        }
        "split" => {
            let report = stages::split(
                &f("examples.bin"),
                cfg.seed,
                cfg.split.validation_fraction,
                &f("train.bin"),
                &f("validation.bin"),
            )?;
            write_json(&f("split.json"), &report)?;
        }
        "train" => {
            let mode = match cfg.train.opt_out_coverage {
                Some(c) => Calibration::Coverage(c),
                None => Calibration::Mean,
            };
            let summary = stages::train(
                &f("train.bin"),
                Some(&f("validation.bin")),
                &f("bank.json"),
                &cfg.train_config(),
                mode,
                &f("model.ckpt"),
            )?;
            write_json(&f("train.json"), &summary)?;
        }
        "eval" => {
            let report = stages::eval(
                &f("model.ckpt"),
                &f("validation.bin"),
                &EvalOptions {
                    bank: Some(&f("bank.json")),
                    train_examples: Some(&f("train.bin")),
                    curve: Some(&f("curve.csv")),
                    curve_steps: cfg.eval.curve_steps,
                    unique_samples: cfg.eval.unique_samples,
                    seed: cfg.seed,
                },
            )?;
            write_json(&f("eval.json"), &report)?;
        }
        other => unreachable!("unknown stage {other}"),
    }
    Ok(())
}

/// Run every stage that is not already fresh. The manifest is rewritten
/// after each stage, so an interrupted run resumes where it stopped.
pub fn run(corpus: &Path, cfg: &PipelineConfig, workdir: &Path) -> Result<PipelineReport> {
    cfg.validate()?;
    if !corpus.is_file() {
        return Err(invalid(format!("corpus {} not found", corpus.display())));
    }
    std::fs::create_dir_all(workdir).with_context(|| format!("creating {}", workdir.display()))?;
    let manifest_path = workdir.join(MANIFEST);
    let previous: Manifest = if manifest_path.exists() {
        read_json(&manifest_path).unwrap_or_default()
    } else {
        Manifest::default()
    };
    let mut manifest = Manifest {
        config_hash: cfg.hash(),
        corpus_sha256: sha256_file(corpus)?,
        stages: Vec::new(),
    };
    let mut ran = Vec::new();
    for stage in stages(cfg, corpus, workdir) {
        let attempt = || -> Result<(String, bool)> {
            let key = stage_key(&stage, workdir)?;
            let prev = previous.stages.iter().find(|s| s.stage == stage.name);
            if fresh(prev, &key, workdir) {
                return Ok((key, false));
            }
            run_stage(stage.name, cfg, corpus, workdir)?;
            Ok((key, true))
        };
        let (key, did_run) = match attempt() {
            Ok(r) => r,
            Err(source) => {
                write_json(&manifest_path, &manifest)?;
                return Err(StageError {
                    stage: stage.name,
                    source,
                }
                .into());
            }
        };
        let outputs = stage
            .outputs
            .iter()
            .map(|o| Ok((o.to_string(), sha256_file(&workdir.join(o))?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        tracing::info!(stage = stage.name, ran = did_run, "stage done");
        manifest.stages.push(StageRecord {
            stage: stage.name.to_string(),
            key,
            outputs,
        });
        write_json(&manifest_path, &manifest)?;
        ran.push((stage.name, did_run));
    }
    Ok(PipelineReport {
        stages: ran,
        eval: read_json(&workdir.join("eval.json"))?,
        manifest,
    })
}

/// The config with every default spelled out.
pub fn default_config_toml() -> String {
    toml::to_string_pretty(&PipelineConfig::default()).expect("config serializes")
}
