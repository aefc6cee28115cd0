//! File-to-file steps shared by the individual commands and the pipeline.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use replybank_core::classifier::{
    accuracy, calibrate_opt_out, featurize, fit_tfidf_features, majority_baseline, opt_out_curve, score,
    threshold_grid, train as fit, unique_per_100, Abstentions, Calibration, Checkpoint, OptOutPoint, TrainConfig,
};
use replybank_core::corpus::{build_frequent_set, load_corpus, read_responses_tsv, write_responses_tsv, ContextConfig, ResponseRecord};
use replybank_core::encode::{generate_candidate_pairs, read_pairs_tsv, write_pairs_tsv, CandidatePair, Encoder, EncoderSpec};
use replybank_core::responsebank::{
    auto_bank, extract_labeled_examples, load_decision_log, load_examples, save_examples, LabeledExample, MergeSession,
    ResponseBank,
};
use replybank_core::simcluster::{
    agglomerate, build_clusters, cluster_stats, jaccard_scores, load_scores, read_clusters_json, write_clusters_json,
    write_scores_tsv, Cluster, ClusterStats, DistanceMatrix, SimilarityScore,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Write through a temporary sibling and rename, so a crash never leaves a
/// half-written artifact under the final name.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let file = File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush()?;
    w.get_ref().sync_all()?;
    drop(w);
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h)?;
    Ok(hex::encode(h.finalize()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

pub fn load_responses(path: &Path) -> Result<Vec<ResponseRecord>> {
    Ok(read_responses_tsv(open(path)?, &path.display().to_string())?)
}

pub fn load_pairs(path: &Path, n: usize) -> Result<BTreeSet<CandidatePair>> {
    Ok(read_pairs_tsv(open(path)?, &path.display().to_string(), Some(n))?)
}

pub fn load_clusters(path: &Path) -> Result<Vec<Cluster>> {
    read_clusters_json(open(path)?).with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IngestReport {
    pub conversations: usize,
    pub doctor_turns: u64,
    pub frequent_responses: usize,
    /// Doctor turns whose text is in the frequent set.
    pub frequent_occurrences: u64,
}

pub fn ingest(corpus: &Path, out: &Path) -> Result<IngestReport> {
    let convs = load_corpus(corpus)?;
    if convs.is_empty() {
        return Err(replybank_core::Error::Empty("corpus").into());
    }
    let records = build_frequent_set(&convs);
    write_atomic(out, |w| Ok(write_responses_tsv(w, &records)?))?;
    Ok(IngestReport {
        conversations: convs.len(),
        doctor_turns: convs.iter().map(|c| c.doctor_turns().count() as u64).sum(),
        frequent_responses: records.len(),
        frequent_occurrences: records.iter().map(|r| r.count()).sum(),
    })
}

pub fn candidates(responses: &Path, encoders: &[EncoderSpec], k: usize, out: &Path) -> Result<usize> {
    let records = load_responses(responses)?;
    let built = encoders
        .iter()
        .map(|e| e.build(&records))
        .collect::<replybank_core::Result<Vec<_>>>()?;
    let refs: Vec<&dyn Encoder> = built.iter().map(|b| b.as_ref()).collect();
    let pairs = generate_candidate_pairs(&records, &refs, k)?;
    write_atomic(out, |w| Ok(write_pairs_tsv(w, &pairs)?))?;
    Ok(pairs.len())
}

fn scores_for(
    records: &[ResponseRecord],
    pairs: &BTreeSet<CandidatePair>,
    external: Option<&Path>,
) -> Result<Vec<SimilarityScore>> {
    Ok(match external {
        Some(p) => load_scores(open(p)?, &p.display().to_string(), pairs, records.len())?,
        None => jaccard_scores(records, pairs)?,
    })
}

/// Similarity for every candidate pair: read from an external model's
/// output when given, otherwise token-set Jaccard.
pub fn score_pairs(responses: &Path, pairs: &Path, external: Option<&Path>, out: &Path) -> Result<usize> {
    let records = load_responses(responses)?;
    let pairs = load_pairs(pairs, records.len())?;
    let scores = scores_for(&records, &pairs, external)?;
    write_atomic(out, |w| Ok(write_scores_tsv(w, &scores)?))?;
    Ok(scores.len())
}

pub fn cluster(responses: &Path, pairs: &Path, scores: Option<&Path>, threshold: f64, out: &Path) -> Result<Vec<Cluster>> {
    let records = load_responses(responses)?;
    let pairs = load_pairs(pairs, records.len())?;
    let scores = scores_for(&records, &pairs, scores)?;
    let d = DistanceMatrix::build(records.len(), &scores)?;
    let clusters = build_clusters(agglomerate(&d, threshold)?, &records)?;
    write_atomic(out, |w| Ok(write_clusters_json(w, &clusters)?))?;
    Ok(clusters)
}

pub fn clusters_report(clusters: &Path, responses: &Path, doctor_turns: u64, k: usize) -> Result<ClusterStats> {
    Ok(cluster_stats(&load_clusters(clusters)?, &load_responses(responses)?, doctor_turns, k))
}

pub fn bank_auto(clusters: &Path, responses: &Path, out: &Path) -> Result<ResponseBank> {
    let bank = auto_bank(&load_clusters(clusters)?, &load_responses(responses)?)?;
    bank.save(out)?;
    Ok(bank)
}

/// Re-apply a decision log on top of `start` (an empty bank when absent).
pub fn bank_replay(
    clusters: &Path,
    responses: &Path,
    start: Option<&Path>,
    decisions: &Path,
    out: &Path,
) -> Result<ResponseBank> {
    let start = start.map(ResponseBank::load).transpose()?.unwrap_or_default();
    let session = MergeSession::replay(
        &load_clusters(clusters)?,
        &load_responses(responses)?,
        start,
        &load_decision_log(decisions)?,
    )?;
    session.bank().save(out)?;
    Ok(session.bank().clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExtractReport {
    pub examples: usize,
    pub doctor_turns: u64,
    pub labeled_fraction: f64,
}

pub fn extract(corpus: &Path, bank: &Path, responses: &Path, context: ContextConfig, out: &Path) -> Result<ExtractReport> {
    let convs = load_corpus(corpus)?;
    let bank = ResponseBank::load(bank)?;
    let ex = extract_labeled_examples(&convs, &bank, &load_responses(responses)?, context)?;
    save_examples(out, &ex.examples)?;
    Ok(ExtractReport {
        examples: ex.examples.len(),
        doctor_turns: ex.doctor_turns,
        labeled_fraction: ex.labeled_fraction,
    })
}

/// Whether a conversation is held out; a pure function of seed and id.
pub fn held_out(conversation_id: &str, seed: u64, fraction: f64) -> bool {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(conversation_id.as_bytes());
    let d = h.finalize();
    let x = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
    (x as f64 / 2f64.powi(64)) < fraction
}

pub fn split_examples(examples: Vec<LabeledExample>, seed: u64, fraction: f64) -> (Vec<LabeledExample>, Vec<LabeledExample>) {
    examples
        .into_iter()
        .partition(|e| !held_out(&e.conversation_id, seed, fraction))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SplitReport {
    pub train: usize,
    pub validation: usize,
}

pub fn split(examples: &Path, seed: u64, fraction: f64, train_out: &Path, val_out: &Path) -> Result<SplitReport> {
    if !(0.0..1.0).contains(&fraction) {
        bail!(crate::Invalid(format!("validation fraction {fraction} outside [0, 1)")));
    }
    let (train, val) = split_examples(load_examples(examples)?, seed, fraction);
    save_examples(train_out, &train)?;
    save_examples(val_out, &val)?;
    Ok(SplitReport {
        train: train.len(),
        validation: val.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainSummary {
    pub examples: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub threshold: f64,
    pub bank_version: u64,
    pub epoch_losses: Vec<f64>,
    pub unrepresented_classes: Vec<u32>,
}

/// Fit featurizer and model on `train`, calibrate the opt-out threshold on
/// `calibration` (the training set when absent) and save a checkpoint.
pub fn train(
    train: &Path,
    calibration: Option<&Path>,
    bank: &Path,
    config: &TrainConfig,
    mode: Calibration,
    out: &Path,
) -> Result<TrainSummary> {
    let bank = ResponseBank::load(bank)?;
    let examples = load_examples(train)?;
    let extractor = fit_tfidf_features(&examples)?;
    let data = featurize(&extractor, &examples);
    let report = fit(&data, bank.len(), config)?;
    let mut model = report.model;
    model.bank_version = bank.version;
    model.vocab_hash = extractor.vocab_hash();
    let calib = match calibration {
        Some(p) => featurize(&extractor, &load_examples(p)?),
        None => data,
    };
    let calib = if calib.is_empty() {
        featurize(&extractor, &examples)
    } else {
        calib
    };
    let max_probs: Vec<f64> = score(&model, &calib)?.iter().map(|s| s.max_prob).collect();
    model.threshold = calibrate_opt_out(&max_probs, mode)?;
    let ckpt = Checkpoint::new(model, extractor)?;
    ckpt.save(out)?;
    Ok(TrainSummary {
        examples: examples.len(),
        num_classes: ckpt.model.num_classes,
        feature_dim: ckpt.model.feature_dim,
        threshold: ckpt.model.threshold,
        bank_version: ckpt.model.bank_version,
        epoch_losses: report.epoch_losses,
        unrepresented_classes: report.unrepresented,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub examples: usize,
    /// Top-1 accuracy with no opt-out.
    pub accuracy: f64,
    pub threshold: f64,
    pub coverage_at_threshold: f64,
    pub accuracy_at_threshold: Option<f64>,
    pub majority_baseline: Option<f64>,
    pub unique_per_100: Option<f64>,
}

pub fn write_curve(path: &Path, curve: &[OptOutPoint]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "threshold,coverage,retained_accuracy")?;
        for p in curve {
            match p.retained_accuracy {
                Some(a) => writeln!(w, "{},{},{}", p.threshold, p.coverage, a)?,
                None => writeln!(w, "{},{},", p.threshold, p.coverage)?,
            }
        }
        Ok(())
    })
}

pub struct EvalOptions<'a> {
    pub bank: Option<&'a Path>,
    pub train_examples: Option<&'a Path>,
    pub curve: Option<&'a Path>,
    pub curve_steps: usize,
    pub unique_samples: usize,
    pub seed: u64,
}

pub fn eval(model: &Path, examples: &Path, opts: &EvalOptions) -> Result<EvalReport> {
    let ckpt = Checkpoint::load(model)?;
    let examples = load_examples(examples)?;
    let data = featurize(&ckpt.extractor, &examples);
    let scored = score(&ckpt.model, &data)?;
    let threshold = ckpt.model.threshold;
    let at = opt_out_curve(&scored, &[threshold])?[0];
    if let Some(path) = opts.curve {
        write_curve(path, &opt_out_curve(&scored, &threshold_grid(opts.curve_steps))?)?;
    }
    let majority = match opts.train_examples {
        Some(p) => {
            let train: Vec<u32> = load_examples(p)?.iter().map(|e| e.class_id).collect();
            let eval: Vec<u32> = examples.iter().map(|e| e.class_id).collect();
            Some(majority_baseline(&train, &eval)?)
        }
        None => None,
    };
    let unique = match opts.bank {
        Some(p) => {
            let bank = ResponseBank::load(p)?;
            let suggestions = scored
                .iter()
                .filter(|s| s.max_prob >= threshold)
                .map(|s| bank.exemplar(s.predicted).map(str::to_owned))
                .collect::<replybank_core::Result<Vec<_>>>()?;
            if suggestions.len() >= 100 {
                Some(unique_per_100(&suggestions, opts.unique_samples, opts.seed)?)
            } else {
                None
            }
        }
        None => None,
    };
    Ok(EvalReport {
        examples: examples.len(),
        accuracy: accuracy(&scored, 0.0, Abstentions::Excluded)?,
        threshold,
        coverage_at_threshold: at.coverage,
        accuracy_at_threshold: at.retained_accuracy,
        majority_baseline: majority,
        unique_per_100: unique,
    })
}
