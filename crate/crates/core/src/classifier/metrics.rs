use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierModel, SparseVector};
use crate::error::{Error, Result};
use crate::responsebank::ClassId;

/// Top prediction for one evaluation example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scored {
    pub max_prob: f64,
    pub predicted: ClassId,
    pub label: ClassId,
}

impl Scored {
    pub fn correct(&self) -> bool {
        self.predicted == self.label
    }
}

pub fn score(model: &ClassifierModel, data: &[(SparseVector, ClassId)]) -> Result<Vec<Scored>> {
    data.iter()
        .map(|(x, y)| {
            let p = model.predict_with_threshold(x, 0.0)?;
            Ok(Scored {
                max_prob: p.max_prob,
                predicted: p.top_class_id,
                label: *y,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "mode", content = "coverage")]
pub enum Calibration {
    /// Mean of the maximum probability.
    Mean,
    /// Target fraction of examples kept, in `(0, 1]`.
    Coverage(f64),
}

/// Opt-out threshold from validation confidences. For a coverage target `c`
/// the threshold is the `⌊(1 − c)·n⌋`-th smallest confidence, so at least
/// `c·n` examples have `max_prob >= threshold`.
pub fn calibrate_opt_out(max_probs: &[f64], mode: Calibration) -> Result<f64> {
    if max_probs.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    if max_probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("confidences"));
    }
    match mode {
        Calibration::Mean => Ok(max_probs.iter().sum::<f64>() / max_probs.len() as f64),
        Calibration::Coverage(c) => {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::validation(format!("coverage {c} outside (0, 1]")));
            }
            let mut sorted = max_probs.to_vec();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            let rank = (((1.0 - c) * n as f64).floor() as usize).min(n - 1);
            Ok(sorted[rank])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OptOutPoint {
    pub threshold: f64,
    /// Fraction of examples with `max_prob >= threshold`.
    pub coverage: f64,
    /// Accuracy on the retained examples; `None` when nothing is retained.
    pub retained_accuracy: Option<f64>,
}

pub fn opt_out_curve(scored: &[Scored], thresholds: &[f64]) -> Result<Vec<OptOutPoint>> {
    if scored.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let n = scored.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&threshold| {
            let (kept, correct) = scored
                .iter()
                .filter(|s| s.max_prob >= threshold)
                .fold((0usize, 0usize), |(k, c), s| (k + 1, c + s.correct() as usize));
            OptOutPoint {
                threshold,
                coverage: kept as f64 / n,
                retained_accuracy: (kept > 0).then(|| correct as f64 / kept as f64),
            }
        })
        .collect())
}

/// Evenly spaced thresholds `0, 1/steps, ..., 1`.
pub fn threshold_grid(steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Abstentions {
    #[default]
    Excluded,
    CountedWrong,
}

/// Accuracy at `threshold`. Abstentions are dropped from the denominator or
/// counted as errors.
pub fn accuracy(scored: &[Scored], threshold: f64, abstentions: Abstentions) -> Result<f64> {
    if scored.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut kept = 0usize;
    let mut correct = 0usize;
    for s in scored {
        if s.max_prob >= threshold {
            kept += 1;
            correct += s.correct() as usize;
        }
    }
    let denom = match abstentions {
        Abstentions::Excluded => kept,
        Abstentions::CountedWrong => scored.len(),
    };
    if denom == 0 {
        return Err(Error::Empty("retained set"));
    }
    Ok(correct as f64 / denom as f64)
}

/// Most frequent training label (ties to the smaller id).
pub fn majority_class(labels: &[ClassId]) -> Result<ClassId> {
    let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
    for &y in labels {
        *counts.entry(y).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(c, _)| c)
        .ok_or(Error::Empty("labels"))
}

/// Accuracy of always predicting the training majority class.
pub fn majority_baseline(train_labels: &[ClassId], eval_labels: &[ClassId]) -> Result<f64> {
    let m = majority_class(train_labels)?;
    if eval_labels.is_empty() {
        return Err(Error::Empty("evaluation labels"));
    }
    Ok(eval_labels.iter().filter(|&&y| y == m).count() as f64 / eval_labels.len() as f64)
}

/// Mean number of distinct texts in `samples` bootstrap draws of 100
/// suggestions each.
pub fn unique_per_100(suggestions: &[String], samples: usize, seed: u64) -> Result<f64> {
    if suggestions.len() < 100 {
        return Err(Error::validation(format!(
            "need at least 100 suggestions, got {}",
            suggestions.len()
        )));
    }
    if samples == 0 {
        return Err(Error::validation("samples must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0usize;
    let mut seen: HashSet<&str> = HashSet::with_capacity(100);
    for _ in 0..samples {
        seen.clear();
        for _ in 0..100 {
            seen.insert(&suggestions[rng.random_range(0..suggestions.len())]);
        }
        total += seen.len();
    }
    Ok(total as f64 / samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(max_prob: f64, ok: bool) -> Scored {
        Scored {
            max_prob,
            predicted: 0,
            label: if ok { 0 } else { 1 },
        }
    }

    #[test]
    fn mean_and_coverage_calibration() {
        assert_eq!(calibrate_opt_out(&[0.5; 7], Calibration::Mean).unwrap(), 0.5);
        let probs = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
        assert_eq!(calibrate_opt_out(&probs, Calibration::Coverage(0.5)).unwrap(), 0.6);
        assert_eq!(calibrate_opt_out(&probs, Calibration::Coverage(1.0)).unwrap(), 0.1);
        assert!(calibrate_opt_out(&probs, Calibration::Coverage(0.0)).is_err());
        assert!(calibrate_opt_out(&probs, Calibration::Coverage(1.1)).is_err());
        assert!(calibrate_opt_out(&[], Calibration::Mean).is_err());
    }

    #[test]
    fn curve_endpoints() {
        let data = [s(0.9, true), s(0.6, false), s(0.3, true), s(0.2, false)];
        let curve = opt_out_curve(&data, &[0.0, 0.5, 1.0 + 1e-9]).unwrap();
        assert_eq!(curve[0].coverage, 1.0);
        assert_eq!(curve[0].retained_accuracy, Some(0.5));
        assert_eq!(curve[0].retained_accuracy.unwrap(), accuracy(&data, 0.0, Abstentions::Excluded).unwrap());
        assert_eq!(curve[1].coverage, 0.5);
        assert_eq!(curve[2].coverage, 0.0);
        assert_eq!(curve[2].retained_accuracy, None);
        assert!(opt_out_curve(&[], &[0.0]).is_err());
    }

    #[test]
    fn abstention_handling() {
        let data = [s(0.9, true), s(0.2, true), s(0.8, false), s(0.1, false)];
        assert_eq!(accuracy(&data, 0.5, Abstentions::Excluded).unwrap(), 0.5);
        assert_eq!(accuracy(&data, 0.5, Abstentions::CountedWrong).unwrap(), 0.25);
        assert!(accuracy(&data, 0.95, Abstentions::Excluded).is_err());
    }

    #[test]
    fn majority_baseline_matches_prior() {
        let train = [2, 2, 1, 0, 2, 1, 1];
        // 1 and 2 tie at 3; smaller id wins
        assert_eq!(majority_class(&train).unwrap(), 1);
        let eval = [1, 1, 0, 2, 1];
        assert_eq!(majority_baseline(&train, &eval).unwrap(), 3.0 / 5.0);
    }

    #[test]
    fn unique_per_100_edges() {
        let same = vec!["take care".to_string(); 150];
        assert_eq!(unique_per_100(&same, 50, 1).unwrap(), 1.0);
        let distinct: Vec<String> = (0..1000).map(|i| i.to_string()).collect();
        let u = unique_per_100(&distinct, 200, 2).unwrap();
        // expected 1000·(1 − 0.999^100) ≈ 95.21
        assert!((u - 95.21).abs() < 0.5, "{u}");
        assert!(unique_per_100(&same[..99], 10, 0).is_err());
    }

    #[test]
    fn unique_per_100_is_seeded() {
        let xs: Vec<String> = (0..300).map(|i| (i % 37).to_string()).collect();
        assert_eq!(unique_per_100(&xs, 20, 9).unwrap(), unique_per_100(&xs, 20, 9).unwrap());
    }
}
