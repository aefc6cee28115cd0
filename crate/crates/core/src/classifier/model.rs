use serde::{Deserialize, Serialize};

use super::SparseVector;
use crate::error::{Error, Result};
use crate::responsebank::ClassId;

pub const DEFAULT_SMOOTHING: f64 = 0.1;

/// Softmax regression over feature vectors. `weights` is row-major
/// `num_classes × feature_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub t: f64,
    pub threshold: f64,
    pub bank_version: u64,
    pub vocab_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub top_class_id: ClassId,
    pub max_prob: f64,
    pub abstained: bool,
}

/// Gradients of the mean loss, shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// `(1 − t)·onehot(class_id) + t/K`.
pub fn smoothed_targets(class_id: ClassId, num_classes: usize, t: f64) -> Result<Vec<f64>> {
    if num_classes < 2 {
        return Err(Error::validation("at least two classes are required"));
    }
    if !(0.0..1.0).contains(&t) {
        return Err(Error::validation(format!("smoothing {t} outside [0, 1)")));
    }
    if class_id as usize >= num_classes {
        return Err(Error::UnknownClass(class_id));
    }
    let mut y = vec![t / num_classes as f64; num_classes];
    y[class_id as usize] += 1.0 - t;
    Ok(y)
}

/// Numerically stable `log softmax`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; the first wins ties.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl ClassifierModel {
    pub fn zeros(num_classes: usize, feature_dim: usize, t: f64) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::validation("at least two classes are required"));
        }
        if !(0.0..1.0).contains(&t) {
            return Err(Error::validation(format!("smoothing {t} outside [0, 1)")));
        }
        Ok(Self {
            num_classes,
            feature_dim,
            weights: vec![0.0; num_classes * feature_dim],
            bias: vec![0.0; num_classes],
            t,
            threshold: 0.0,
            bank_version: 0,
            vocab_hash: String::new(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::validation("at least two classes are required"));
        }
        if self.weights.len() != self.num_classes * self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.num_classes * self.feature_dim,
                got: self.weights.len(),
            });
        }
        if self.bias.len() != self.num_classes {
            return Err(Error::DimensionMismatch {
                expected: self.num_classes,
                got: self.bias.len(),
            });
        }
        if !(0.0..1.0).contains(&self.t) {
            return Err(Error::validation(format!("smoothing {} outside [0, 1)", self.t)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::validation(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(())
    }

    fn check(&self, x: &SparseVector) -> Result<()> {
        if x.dim() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                got: x.dim(),
            });
        }
        Ok(())
    }

    pub fn logits(&self, x: &SparseVector) -> Result<Vec<f64>> {
        self.check(x)?;
        let d = self.feature_dim;
        Ok((0..self.num_classes)
            .map(|k| {
                let row = &self.weights[k * d..(k + 1) * d];
                self.bias[k] + x.entries().iter().map(|&(j, v)| row[j as usize] * v).sum::<f64>()
            })
            .collect())
    }

    pub fn predict(&self, x: &SparseVector) -> Result<Prediction> {
        self.predict_with_threshold(x, self.threshold)
    }

    pub fn predict_with_threshold(&self, x: &SparseVector, threshold: f64) -> Result<Prediction> {
        let probabilities = softmax(&self.logits(x)?);
        let top = argmax(&probabilities);
        let max_prob = probabilities[top];
        Ok(Prediction {
            top_class_id: top as ClassId,
            max_prob,
            abstained: max_prob < threshold,
            probabilities,
        })
    }

    /// Mean label-smoothed cross-entropy over `batch` and its analytic
    /// gradient. Per example, `∂L/∂z = softmax(z) − y'`.
    pub fn loss_and_grad(&self, batch: &[(&SparseVector, ClassId)]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let d = self.feature_dim;
        let mut gw = vec![0.0; self.num_classes * d];
        let mut gb = vec![0.0; self.num_classes];
        let mut loss = 0.0;
        for &(x, y) in batch {
            let delta = self.example_delta(x, y, &mut loss)?;
            for (k, dk) in delta.iter().enumerate() {
                gb[k] += dk;
                let row = &mut gw[k * d..(k + 1) * d];
                for &(j, v) in x.entries() {
                    row[j as usize] += dk * v;
                }
            }
        }
        let n = batch.len() as f64;
        gw.iter_mut().chain(gb.iter_mut()).for_each(|g| *g /= n);
        Ok((loss / n, Gradients { weights: gw, bias: gb }))
    }

    /// Adds this example's loss to `loss` and returns `softmax(z) − y'`.
    pub(crate) fn example_delta(&self, x: &SparseVector, y: ClassId, loss: &mut f64) -> Result<Vec<f64>> {
        let target = smoothed_targets(y, self.num_classes, self.t)?;
        let logp = log_softmax(&self.logits(x)?);
        *loss -= target.iter().zip(&logp).map(|(t, l)| t * l).sum::<f64>();
        Ok(logp.iter().zip(&target).map(|(l, t)| l.exp() - t).collect())
    }

    /// Mean loss over a dataset.
    pub fn loss(&self, data: &[(SparseVector, ClassId)]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let mut loss = 0.0;
        for (x, y) in data {
            let target = smoothed_targets(*y, self.num_classes, self.t)?;
            let logp = log_softmax(&self.logits(x)?);
            loss -= target.iter().zip(&logp).map(|(t, l)| t * l).sum::<f64>();
        }
        Ok(loss / data.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_instance(rng: &mut ChaCha8Rng) -> (ClassifierModel, Vec<(SparseVector, ClassId)>) {
        let k = rng.random_range(2..=10);
        let d = rng.random_range(1..=16);
        let mut m = ClassifierModel::zeros(k, d, rng.random_range(0.0..0.5)).unwrap();
        m.weights.iter_mut().for_each(|w| *w = rng.random_range(-2.0..2.0));
        m.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        let n = rng.random_range(1..=6);
        let data = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                (SparseVector::from_dense(&x).unwrap(), rng.random_range(0..k) as ClassId)
            })
            .collect();
        (m, data)
    }

    /// Central finite differences of the mean loss.
    pub(crate) fn numeric_grad(m: &ClassifierModel, data: &[(SparseVector, ClassId)], eps: f64) -> Gradients {
        let f = |m: &ClassifierModel| m.loss(data).unwrap();
        let mut probe = m.clone();
        let mut weights = vec![0.0; m.weights.len()];
        for (i, g) in weights.iter_mut().enumerate() {
            let w = m.weights[i];
            probe.weights[i] = w + eps;
            let up = f(&probe);
            probe.weights[i] = w - eps;
            let down = f(&probe);
            probe.weights[i] = w;
            *g = (up - down) / (2.0 * eps);
        }
        let mut bias = vec![0.0; m.bias.len()];
        for (i, g) in bias.iter_mut().enumerate() {
            let b = m.bias[i];
            probe.bias[i] = b + eps;
            let up = f(&probe);
            probe.bias[i] = b - eps;
            let down = f(&probe);
            probe.bias[i] = b;
            *g = (up - down) / (2.0 * eps);
        }
        Gradients { weights, bias }
    }

    /// `‖a − b‖ / max(‖a‖, ‖b‖)` over all parameters.
    pub(crate) fn relative_error(a: &Gradients, b: &Gradients) -> f64 {
        let flat = |g: &Gradients| g.weights.iter().chain(&g.bias).copied().collect::<Vec<_>>();
        let (a, b) = (flat(a), flat(b));
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }

    #[test]
    fn smoothed_targets_by_hand() {
        let y = smoothed_targets(2, 4, 0.1).unwrap();
        for (got, want) in y.iter().zip([0.025, 0.025, 0.925, 0.025]) {
            assert!((got - want).abs() <= 1e-12);
        }
        assert_eq!(smoothed_targets(1, 3, 0.0).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(smoothed_targets(4, 4, 0.1).is_err());
        assert!(smoothed_targets(0, 1, 0.1).is_err());
        assert!(smoothed_targets(0, 4, 1.0).is_err());
    }

    #[test]
    fn uniform_logits_loss_is_ln_k() {
        let m = ClassifierModel::zeros(7, 3, 0.0).unwrap();
        let x = SparseVector::from_dense(&[1.0, -2.0, 0.5]).unwrap();
        let (loss, _) = m.loss_and_grad(&[(&x, 3)]).unwrap();
        assert!((loss - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_class_logistic_by_hand() {
        let mut m = ClassifierModel::zeros(2, 2, 0.1).unwrap();
        m.weights = vec![1.0, 0.0, 0.0, 0.0];
        let x = SparseVector::from_dense(&[3f64.ln(), 0.0]).unwrap();
        let p = m.predict(&x).unwrap();
        assert!((p.probabilities[0] - 0.75).abs() < 1e-15);
        assert!((p.probabilities[1] - 0.25).abs() < 1e-15);
        assert_eq!(p.top_class_id, 0);
    }

    #[test]
    fn zero_model_is_uniform_and_abstains_by_threshold() {
        let mut m = ClassifierModel::zeros(10, 2, 0.1).unwrap();
        let x = SparseVector::from_dense(&[1.0, 1.0]).unwrap();
        m.threshold = 0.5;
        let p = m.predict(&x).unwrap();
        assert!(p.abstained);
        assert!((p.max_prob - 0.1).abs() < 1e-15);
        assert_eq!(p.top_class_id, 0);
        m.threshold = 0.0;
        assert!(!m.predict(&x).unwrap().abstained);
    }

    #[test]
    fn dimension_mismatch() {
        let m = ClassifierModel::zeros(3, 4, 0.1).unwrap();
        let x = SparseVector::from_dense(&[1.0]).unwrap();
        assert!(matches!(m.predict(&x), Err(Error::DimensionMismatch { expected: 4, got: 1 })));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let (m, data) = random_instance(&mut rng);
            let batch: Vec<_> = data.iter().map(|(x, y)| (x, *y)).collect();
            let (_, g) = m.loss_and_grad(&batch).unwrap();
            let err = relative_error(&g, &numeric_grad(&m, &data, 1e-5));
            assert!(err <= 1e-4, "relative error {err}");
        }
    }

    #[test]
    fn smoothing_limit_is_plain_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (mut m, data) = random_instance(&mut rng);
            m.t = 1e-8;
            let smoothed = m.loss(&data).unwrap();
            m.t = 0.0;
            let plain = m.loss(&data).unwrap();
            assert!((smoothed - plain).abs() <= 1e-6);
        }
    }

    proptest! {
        #[test]
        fn loss_never_below_target_entropy(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (m, data) = random_instance(&mut rng);
            let bound: f64 = data.iter().map(|(_, y)| {
                let t = smoothed_targets(*y, m.num_classes, m.t).unwrap();
                -t.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
            }).sum::<f64>() / data.len() as f64;
            prop_assert!(m.loss(&data).unwrap() >= bound - 1e-12);
        }

        #[test]
        fn softmax_shift_invariance(z in prop::collection::vec(-30.0f64..30.0, 2..12), c in -100.0f64..100.0) {
            let p = softmax(&z);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let q = softmax(&shifted);
            prop_assert_eq!(argmax(&p), argmax(&q));
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn targets_sum_to_one(k in 2usize..50, t in 0.0f64..0.999, c in 0usize..50) {
            let c = (c % k) as ClassId;
            let y = smoothed_targets(c, k, t).unwrap();
            prop_assert!((y.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn argmax_ties_go_to_smallest_id() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        let m = ClassifierModel::zeros(3, 1, 0.0).unwrap();
        let x = SparseVector::from_dense(&[0.0]).unwrap();
        assert_eq!(m.predict(&x).unwrap().top_class_id, 0);
    }
}
