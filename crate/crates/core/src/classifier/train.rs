use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierModel, SparseVector, DEFAULT_SMOOTHING};
use crate::error::{Error, Result};
use crate::responsebank::ClassId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub t: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1.0,
            epochs: 40,
            seed: 0,
            t: DEFAULT_SMOOTHING,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.t) {
            return Err(Error::validation(format!("smoothing {} outside [0, 1)", self.t)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: ClassifierModel,
    /// Mean loss over the full training set after each epoch.
    pub epoch_losses: Vec<f64>,
    /// Classes with no training example.
    pub unrepresented: Vec<ClassId>,
}

/// Mini-batch gradient descent from zero parameters. The example order is
/// reshuffled each epoch from `seed`, and the gradient is summed in batch
/// order, so the result is reproducible bit for bit.
pub fn train(data: &[(SparseVector, ClassId)], num_classes: usize, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let Some((first, _)) = data.first() else {
        return Err(Error::Empty("training examples"));
    };
    let dim = first.dim();
    for (x, y) in data {
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.dim(),
            });
        }
        if *y as usize >= num_classes {
            return Err(Error::UnknownClass(*y));
        }
    }
    let mut model = ClassifierModel::zeros(num_classes, dim, config.t)?;
    let present: BTreeSet<ClassId> = data.iter().map(|(_, y)| *y).collect();
    let unrepresented = (0..num_classes as ClassId).filter(|c| !present.contains(c)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut gw = vec![0.0; num_classes * dim];
    let mut gb = vec![0.0; num_classes];
    let mut touched: BTreeSet<u32> = BTreeSet::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut sink = 0.0;
            for &i in batch {
                let (x, y) = &data[i];
                let delta = model.example_delta(x, *y, &mut sink)?;
                for (k, dk) in delta.iter().enumerate() {
                    gb[k] += dk;
                    for &(j, v) in x.entries() {
                        gw[k * dim + j as usize] += dk * v;
                    }
                }
                touched.extend(x.entries().iter().map(|&(j, _)| j));
            }
            let step = config.learning_rate / batch.len() as f64;
            for k in 0..num_classes {
                model.bias[k] -= step * gb[k];
                gb[k] = 0.0;
                for &j in &touched {
                    let idx = k * dim + j as usize;
                    model.weights[idx] -= step * gw[idx];
                    gw[idx] = 0.0;
                }
            }
            touched.clear();
        }
        epoch_losses.push(model.loss(data)?);
    }
    if model.weights.iter().chain(&model.bias).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("trained parameters; lower the learning rate"));
    }
    Ok(TrainReport {
        model,
        epoch_losses,
        unrepresented,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Three well-separated blobs in the plane plus a constant feature.
    pub(crate) fn separable(n: usize, seed: u64) -> Vec<(SparseVector, ClassId)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [(4.0, 0.0), (-2.0, 3.5), (-2.0, -3.5)];
        (0..n)
            .map(|i| {
                let c = i % 3;
                let (cx, cy) = centers[c];
                let x = [cx + rng.random_range(-1.0..1.0), cy + rng.random_range(-1.0..1.0), 1.0];
                (SparseVector::from_dense(&x).unwrap(), c as ClassId)
            })
            .collect()
    }

    fn train_accuracy(m: &ClassifierModel, data: &[(SparseVector, ClassId)]) -> f64 {
        data.iter().filter(|(x, y)| m.predict(x).unwrap().top_class_id == *y).count() as f64 / data.len() as f64
    }

    #[test]
    fn separable_data_reaches_full_accuracy() {
        let data = separable(300, 7);
        let cfg = TrainConfig {
            batch_size: 16,
            learning_rate: 0.5,
            epochs: 200,
            seed: 1,
            t: 0.1,
        };
        let report = train(&data, 3, &cfg).unwrap();
        assert_eq!(train_accuracy(&report.model, &data), 1.0);
        assert!(report.unrepresented.is_empty());
    }

    #[test]
    fn full_batch_loss_is_non_increasing() {
        let data = separable(90, 3);
        let cfg = TrainConfig {
            batch_size: data.len(),
            learning_rate: 0.05,
            epochs: 50,
            seed: 0,
            t: 0.1,
        };
        let losses = train(&data, 3, &cfg).unwrap().epoch_losses;
        assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{losses:?}");
    }

    #[test]
    fn same_seed_same_bits() {
        let data = separable(60, 9);
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let a = train(&data, 4, &cfg).unwrap();
        let b = train(&data, 4, &cfg).unwrap();
        let bits = |m: &ClassifierModel| m.weights.iter().chain(&m.bias).map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.model), bits(&b.model));
        assert_eq!(a.unrepresented, vec![3]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(train(&[], 3, &TrainConfig::default()), Err(Error::Empty(_))));
        let data = separable(3, 0);
        assert!(train(&data, 2, &TrainConfig::default()).is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(train(&data, 3, &bad).is_err());
    }
}
