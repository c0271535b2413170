//! Single fully connected softmax layer that maps extracted features to a model
//! index, and its mini-batch training loop.

use std::fs;
use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DispatchError, Result};
use crate::loss::{penalized_loss, warmup_loss, LossConfig, LossOutput};
use crate::scalar::{argmax, Scalar};
use crate::scenario::FeatureMatrix;

/// Per-dimension affine map `(x - mean) / scale` fitted on training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Standardizer<T: Scalar = f64> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    /// Zero-variance dimensions keep scale 1.
    pub fn fit(features: &FeatureMatrix) -> Self {
        let d = features.dim();
        let n = features.rows().max(1);
        let mut mean = vec![0.0f64; d];
        for i in 0..features.rows() {
            for (m, &x) in mean.iter_mut().zip(features.row(i)) {
                *m += f64::from(x);
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0f64; d];
        for i in 0..features.rows() {
            for ((v, &x), m) in var.iter_mut().zip(features.row(i)).zip(&mean) {
                let dx = f64::from(x) - m;
                *v += dx * dx;
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / n as f64).sqrt();
                if sd > 1e-12 {
                    T::of(sd)
                } else {
                    T::one()
                }
            })
            .collect();
        Self {
            mean: mean.into_iter().map(T::of).collect(),
            scale,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![T::zero(); dim],
            scale: vec![T::one(); dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DispatchHead<T: Scalar = f64> {
    pub feature_dim: usize,
    pub num_models: usize,
    /// Row-major `num_models x feature_dim`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub standardization: Standardizer<T>,
}

/// Fan-in scaled uniform weights in `[-1/sqrt(D), 1/sqrt(D)]`, zero bias.
pub fn init_head<T: Scalar>(
    feature_dim: usize,
    num_models: usize,
    seed: u64,
) -> Result<DispatchHead<T>> {
    if feature_dim == 0 {
        return Err(DispatchError::Config(
            "feature_dim must be at least 1".into(),
        ));
    }
    if num_models < 2 {
        return Err(DispatchError::TooFewModels(num_models));
    }
    let bound = 1.0 / (feature_dim as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bounds");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..feature_dim * num_models)
        .map(|_| T::of(dist.sample(&mut rng)))
        .collect();
    Ok(DispatchHead {
        feature_dim,
        num_models,
        weights,
        bias: vec![T::zero(); num_models],
        standardization: Standardizer::identity(feature_dim),
    })
}

impl<T: Scalar> DispatchHead<T> {
    /// Converts and standardizes the given rows of `features`.
    pub fn prepare(&self, features: &FeatureMatrix) -> Result<Vec<T>> {
        if features.dim() != self.feature_dim {
            return Err(DispatchError::DimensionMismatch {
                what: "feature dim vs head".into(),
                expected: self.feature_dim,
                found: features.dim(),
            });
        }
        let st = &self.standardization;
        let mut out = Vec::with_capacity(features.values().len());
        for i in 0..features.rows() {
            for ((&x, &m), &s) in features.row(i).iter().zip(&st.mean).zip(&st.scale) {
                out.push((T::of_f32(x) - m) / s);
            }
        }
        Ok(out)
    }

    /// Logits for already-prepared rows.
    pub fn logits(&self, prepared: &[T]) -> Vec<T> {
        let d = self.feature_dim;
        let k = self.num_models;
        let rows = prepared.len() / d;
        let mut out = Vec::with_capacity(rows * k);
        for x in prepared.chunks_exact(d) {
            for (w, &b) in self.weights.chunks_exact(d).zip(&self.bias) {
                let dot: T = w.iter().zip(x).map(|(&a, &b)| a * b).sum();
                out.push(dot + b);
            }
        }
        out
    }

    pub fn predict_prepared(&self, prepared: &[T]) -> Vec<usize> {
        self.logits(prepared)
            .chunks_exact(self.num_models)
            .map(argmax)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|x| x.is_finite())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| DispatchError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| DispatchError::io(path, e))?;
        let head: Self = serde_json::from_str(&text)?;
        if head.weights.len() != head.feature_dim * head.num_models
            || head.bias.len() != head.num_models
            || head.standardization.mean.len() != head.feature_dim
            || head.standardization.scale.len() != head.feature_dim
        {
            return Err(DispatchError::DimensionMismatch {
                what: format!("checkpoint {}", path.display()),
                expected: head.feature_dim * head.num_models,
                found: head.weights.len(),
            });
        }
        Ok(head)
    }
}

/// Per-row argmax of the head's logits, lowest index on ties.
pub fn predict<T: Scalar>(head: &DispatchHead<T>, features: &FeatureMatrix) -> Result<Vec<usize>> {
    Ok(head.predict_prepared(&head.prepare(features)?))
}

/// Per-image MFLOPs of the head: a multiply-add per weight counts 2, plus the bias adds.
pub fn head_cost_mflops<T: Scalar>(feature_dim: usize, num_models: usize) -> T {
    T::of_usize(2 * feature_dim * num_models + num_models) / T::of(1e6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Leading epochs trained on weighted cross-entropy over every sample.
    pub warmup_epochs: usize,
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 128,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
            warmup_epochs: 1,
            standardize: true,
        }
    }
}

impl TrainConfig {
    fn check(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(DispatchError::Config(
                "epochs and batch_size must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(DispatchError::Config(
                "learning_rate must be positive and momentum in [0,1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrainHistory<T: Scalar = f64> {
    /// Sample-weighted mean batch loss of each epoch.
    pub loss: Vec<T>,
    /// Training accuracy against the oracle labels at the end of each epoch.
    pub accuracy: Vec<T>,
}

/// Mini-batch gradient descent with momentum on the penalized loss.
///
/// The step is divided by the largest penalty entry, so scaling every penalty
/// by a constant scales the recorded losses and leaves the parameter
/// trajectory unchanged. Batches come from a seeded shuffle redrawn each epoch.
pub fn train_head<T: Scalar>(
    head: &DispatchHead<T>,
    features: &FeatureMatrix,
    labels: &[usize],
    loss_cfg: &LossConfig<T>,
    cfg: &TrainConfig,
) -> Result<(DispatchHead<T>, TrainHistory<T>)> {
    cfg.check()?;
    if labels.is_empty() || features.rows() == 0 {
        return Err(DispatchError::EmptyTrainingData);
    }
    if features.rows() != labels.len() {
        return Err(DispatchError::DimensionMismatch {
            what: "training labels vs feature rows".into(),
            expected: features.rows(),
            found: labels.len(),
        });
    }
    if loss_cfg.num_classes() != head.num_models {
        return Err(DispatchError::DimensionMismatch {
            what: "loss classes vs head outputs".into(),
            expected: head.num_models,
            found: loss_cfg.num_classes(),
        });
    }

    let mut head = head.clone();
    head.standardization = if cfg.standardize {
        Standardizer::fit(features)
    } else {
        Standardizer::identity(head.feature_dim)
    };
    let data = head.prepare(features)?;
    let d = head.feature_dim;
    let k = head.num_models;
    let n = labels.len();

    let max_penalty = loss_cfg.penalties.max_entry();
    let step_scale = if max_penalty > T::zero() {
        max_penalty.recip()
    } else {
        T::zero()
    };
    let lr = T::of(cfg.learning_rate);
    let momentum = T::of(cfg.momentum);
    let mut vel_w = vec![T::zero(); head.weights.len()];
    let mut vel_b = vec![T::zero(); k];

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory::default();
    let mut batch_x: Vec<T> = Vec::with_capacity(cfg.batch_size * d);
    let mut batch_y: Vec<usize> = Vec::with_capacity(cfg.batch_size);
    let mut grad_w = vec![T::zero(); head.weights.len()];
    let mut grad_b = vec![T::zero(); k];

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = T::zero();
        for batch in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in batch {
                batch_x.extend_from_slice(&data[i * d..(i + 1) * d]);
                batch_y.push(labels[i]);
            }
            let logits = head.logits(&batch_x);
            let out = if epoch < cfg.warmup_epochs {
                warmup_loss(&logits, &batch_y, loss_cfg)
            } else {
                penalized_loss(&logits, &batch_y, loss_cfg)
            };
            let LossOutput { loss, gradient, .. } = match out {
                Ok(out) => out,
                Err(DispatchError::NonFiniteLogit { .. }) => {
                    return Err(DispatchError::Diverged {
                        epoch,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            epoch_loss += loss * T::of_usize(batch.len());

            grad_w.iter_mut().for_each(|g| *g = T::zero());
            grad_b.iter_mut().for_each(|g| *g = T::zero());
            for (x, g_row) in batch_x.chunks_exact(d).zip(gradient.chunks_exact(k)) {
                for (c, &g) in g_row.iter().enumerate() {
                    if g == T::zero() {
                        continue;
                    }
                    grad_b[c] += g;
                    for (gw, &xv) in grad_w[c * d..(c + 1) * d].iter_mut().zip(x) {
                        *gw += g * xv;
                    }
                }
            }
            for ((w, v), &g) in head.weights.iter_mut().zip(&mut vel_w).zip(&grad_w) {
                *v = momentum * *v + g * step_scale;
                *w -= lr * *v;
            }
            for ((b, v), &g) in head.bias.iter_mut().zip(&mut vel_b).zip(&grad_b) {
                *v = momentum * *v + g * step_scale;
                *b -= lr * *v;
            }
        }
        let epoch_loss = epoch_loss / T::of_usize(n);
        if !epoch_loss.is_finite() || !head.is_finite() {
            return Err(DispatchError::Diverged {
                epoch,
                loss: epoch_loss.as_f64(),
            });
        }
        let predictions = head.predict_prepared(&data);
        let hits = predictions
            .iter()
            .zip(labels)
            .filter(|(p, y)| p == y)
            .count();
        history.loss.push(epoch_loss);
        history.accuracy.push(T::of_usize(hits) / T::of_usize(n));
    }
    Ok((head, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{PenaltyMatrix, WeightingScheme, WeightingSpec};
    use rand::Rng;

    #[test]
    fn init_is_seeded_and_bounded() {
        let a: DispatchHead<f64> = init_head(3, 2, 7).unwrap();
        let b: DispatchHead<f64> = init_head(3, 2, 7).unwrap();
        let c: DispatchHead<f64> = init_head(3, 2, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.weights, c.weights);
        let bound = 1.0 / 3f64.sqrt();
        assert!(a.weights.iter().all(|w| w.abs() <= bound));
        assert!(a.bias.iter().all(|&b| b == 0.0));
        assert!(init_head::<f64>(0, 2, 0).is_err());
        assert!(init_head::<f64>(2, 1, 0).is_err());
    }

    #[test]
    fn predictions_follow_bias_when_weights_vanish() {
        let mut head: DispatchHead<f64> = init_head(2, 3, 0).unwrap();
        head.weights.iter_mut().for_each(|w| *w = 0.0);
        let feats =
            FeatureMatrix::new(4, 2, vec![0.3, -1.0, 2.0, 5.0, 0.0, 0.0, -3.0, 1.0]).unwrap();
        assert_eq!(predict(&head, &feats).unwrap(), vec![0; 4]);
        head.bias = vec![0.0, 5.0, 0.0];
        assert_eq!(predict(&head, &feats).unwrap(), vec![1; 4]);
    }

    #[test]
    fn predictions_match_brute_force_argmax() {
        let head: DispatchHead<f64> = init_head(5, 4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let values: Vec<f32> = (0..60).map(|_| rng.random_range(-2.0..2.0)).collect();
        let feats = FeatureMatrix::new(12, 5, values).unwrap();
        let preds = predict(&head, &feats).unwrap();
        for (i, &p) in preds.iter().enumerate() {
            let x = feats.row(i);
            let scores: Vec<f64> = (0..4)
                .map(|k| {
                    (0..5)
                        .map(|j| head.weights[k * 5 + j] * f64::from(x[j]))
                        .sum::<f64>()
                        + head.bias[k]
                })
                .collect();
            let mut best = 0;
            for k in 1..4 {
                if scores[k] > scores[best] {
                    best = k;
                }
            }
            assert_eq!(p, best);
        }
        // shifting every bias by the same constant keeps the argmax
        let mut shifted = head.clone();
        shifted.bias.iter_mut().for_each(|b| *b += 3.5);
        assert_eq!(predict(&shifted, &feats).unwrap(), preds);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let head: DispatchHead<f32> = init_head(3, 2, 0).unwrap();
        let feats = FeatureMatrix::new(1, 2, vec![0.0, 1.0]).unwrap();
        assert!(predict(&head, &feats).is_err());
    }

    #[test]
    fn head_cost_formula() {
        assert!((head_cost_mflops::<f64>(512, 4) - 0.0041).abs() < 1e-15);
        assert_eq!(head_cost_mflops::<f64>(0, 3), 3e-6);
        assert_eq!(head_cost_mflops::<f64>(1, 2), 6e-6);
    }

    fn loss_cfg(p: PenaltyMatrix<f64>, counts: &[usize]) -> LossConfig<f64> {
        LossConfig::new(p, WeightingSpec::new(WeightingScheme::Ins), counts).unwrap()
    }

    #[test]
    fn zero_penalties_leave_parameters_unchanged() {
        let head: DispatchHead<f64> = init_head(2, 2, 4).unwrap();
        let feats =
            FeatureMatrix::new(4, 2, vec![0.0, 1.0, 1.0, 0.0, 2.0, 2.0, -1.0, 0.5]).unwrap();
        let labels = [0, 1, 1, 0];
        let cfg = loss_cfg(PenaltyMatrix::uniform(2, 0.0).unwrap(), &[2, 2]);
        let (trained, history) =
            train_head(&head, &feats, &labels, &cfg, &TrainConfig::default()).unwrap();
        assert_eq!(trained.weights, head.weights);
        assert_eq!(trained.bias, head.bias);
        assert!(history.loss.iter().all(|&l| l == 0.0));
        assert_eq!(history.loss.len(), 20);
    }

    #[test]
    fn empty_training_data_is_an_error() {
        let head: DispatchHead<f64> = init_head(2, 2, 4).unwrap();
        let feats = FeatureMatrix::new(0, 2, vec![]).unwrap();
        let cfg = loss_cfg(PenaltyMatrix::uniform(2, 1.0).unwrap(), &[1, 1]);
        assert!(matches!(
            train_head(&head, &feats, &[], &cfg, &TrainConfig::default()),
            Err(DispatchError::EmptyTrainingData)
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let head: DispatchHead<f64> = init_head(3, 2, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.json");
        head.save(&path).unwrap();
        assert_eq!(DispatchHead::<f64>::load(&path).unwrap(), head);
    }
}
