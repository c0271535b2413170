//! Penalty-matrix loss for the dispatch head.
//!
//! A sample whose argmax prediction matches its oracle label contributes
//! nothing. A misclassified sample contributes its softmax cross-entropy scaled
//! by `class_weight[y] * P[y, argmax]`. The multiplier is constant with respect
//! to the logits, so the gradient is the scaled cross-entropy gradient.

mod penalty;
mod weights;

pub use penalty::{PenaltyMatrix, MAX_PENALTY};
pub use weights::{class_weights, WeightingScheme, WeightingSpec, DEFAULT_ENS_BETA};

use serde::{Deserialize, Serialize};

use crate::error::{DispatchError, Result};
use crate::scalar::{argmax, log_sum_exp, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LossConfig<T: Scalar = f64> {
    pub penalties: PenaltyMatrix<T>,
    pub weighting: WeightingSpec<T>,
    /// Cached, mean-normalized per-class weights.
    pub class_weights: Vec<T>,
    /// Ablation switch: also charge plain weighted cross-entropy on correctly
    /// classified samples.
    #[serde(default)]
    pub always_ce: bool,
}

impl<T: Scalar> LossConfig<T> {
    /// Derives class weights from the per-class sample counts.
    pub fn new(
        penalties: PenaltyMatrix<T>,
        weighting: WeightingSpec<T>,
        counts: &[usize],
    ) -> Result<Self> {
        if counts.len() != penalties.size() {
            return Err(DispatchError::DimensionMismatch {
                what: "class counts vs penalty size".into(),
                expected: penalties.size(),
                found: counts.len(),
            });
        }
        let class_weights = class_weights(counts, &weighting)?;
        Ok(Self {
            penalties,
            weighting,
            class_weights,
            always_ce: false,
        })
    }

    /// Uses the given weights as-is.
    pub fn with_class_weights(
        penalties: PenaltyMatrix<T>,
        weighting: WeightingSpec<T>,
        class_weights: Vec<T>,
    ) -> Result<Self> {
        if class_weights.len() != penalties.size() {
            return Err(DispatchError::DimensionMismatch {
                what: "class weights vs penalty size".into(),
                expected: penalties.size(),
                found: class_weights.len(),
            });
        }
        Ok(Self {
            penalties,
            weighting,
            class_weights,
            always_ce: false,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.penalties.size()
    }

    /// Multiplier for a sample with oracle label `label` and argmax `predicted`.
    fn penalized_multiplier(&self, label: usize, predicted: usize) -> Option<T> {
        if label == predicted {
            self.always_ce.then(|| self.class_weights[label])
        } else {
            Some(self.class_weights[label] * self.penalties.get(label, predicted))
        }
    }

    /// Warm-up multiplier: every sample is charged the mean penalty of its row,
    /// so the warm-up stays linear in the penalty matrix.
    fn warmup_multiplier(&self, label: usize) -> T {
        self.class_weights[label] * self.penalties.row_mean(label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    pub loss: T,
    /// Row-major `M x K` gradient of `loss` with respect to the logits.
    pub gradient: Vec<T>,
    /// Samples whose argmax matched their label.
    pub correct: usize,
}

fn check_batch<T: Scalar>(logits: &[T], labels: &[usize], k: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(DispatchError::EmptyTrainingData);
    }
    if logits.len() != labels.len() * k {
        return Err(DispatchError::DimensionMismatch {
            what: "logits".into(),
            expected: labels.len() * k,
            found: logits.len(),
        });
    }
    if let Some(pos) = logits.iter().position(|x| !x.is_finite()) {
        return Err(DispatchError::NonFiniteLogit {
            row: pos / k,
            col: pos % k,
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(DispatchError::Config(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    Ok(())
}

/// Softmax cross-entropy of one row; writes `softmax - onehot` into `grad`.
fn cross_entropy_row<T: Scalar>(row: &[T], label: usize, grad: &mut [T]) -> T {
    let lse = log_sum_exp(row);
    for (g, &z) in grad.iter_mut().zip(row) {
        *g = (z - lse).exp();
    }
    grad[label] -= T::one();
    lse - row[label]
}

fn weighted_batch<T: Scalar>(
    logits: &[T],
    labels: &[usize],
    k: usize,
    multiplier: impl Fn(usize, usize) -> Option<T>,
) -> LossOutput<T> {
    let m = labels.len();
    let inv_m = T::of_usize(m).recip();
    let mut gradient = vec![T::zero(); logits.len()];
    let mut loss = T::zero();
    let mut correct = 0;
    for (i, &label) in labels.iter().enumerate() {
        let row = &logits[i * k..(i + 1) * k];
        let predicted = argmax(row);
        if predicted == label {
            correct += 1;
        }
        let Some(scale) = multiplier(label, predicted) else {
            continue;
        };
        let grad = &mut gradient[i * k..(i + 1) * k];
        let ce = cross_entropy_row(row, label, grad);
        loss += scale * ce;
        let g_scale = scale * inv_m;
        for g in grad.iter_mut() {
            *g *= g_scale;
        }
    }
    LossOutput {
        loss: loss * inv_m,
        gradient,
        correct,
    }
}

/// Mean penalized loss over a batch of `labels.len()` rows of `logits`.
pub fn penalized_loss<T: Scalar>(
    logits: &[T],
    labels: &[usize],
    cfg: &LossConfig<T>,
) -> Result<LossOutput<T>> {
    let k = cfg.num_classes();
    check_batch(logits, labels, k)?;
    Ok(weighted_batch(logits, labels, k, |y, p| {
        cfg.penalized_multiplier(y, p)
    }))
}

/// Class-weighted cross-entropy on every sample, scaled by the row-mean penalty.
/// Used for the warm-up epochs before switching to [`penalized_loss`].
pub fn warmup_loss<T: Scalar>(
    logits: &[T],
    labels: &[usize],
    cfg: &LossConfig<T>,
) -> Result<LossOutput<T>> {
    let k = cfg.num_classes();
    check_batch(logits, labels, k)?;
    Ok(weighted_batch(logits, labels, k, |y, _| {
        Some(cfg.warmup_multiplier(y))
    }))
}

/// Largest relative error between the analytic gradient of [`penalized_loss`]
/// and a central-difference estimate, over entries with `|analytic| > 1e-8`.
///
/// Probe points must be away from argmax ties, otherwise the step can flip the
/// penalty lookup.
pub fn finite_difference_check<T: Scalar>(
    logits: &[T],
    labels: &[usize],
    cfg: &LossConfig<T>,
    epsilon: T,
) -> Result<T> {
    if !(epsilon > T::zero()) {
        return Err(DispatchError::Config("epsilon must be positive".into()));
    }
    let analytic = penalized_loss(logits, labels, cfg)?.gradient;
    let threshold = T::of(1e-8);
    let two_eps = epsilon + epsilon;
    let mut probe = logits.to_vec();
    let mut worst = T::zero();
    for (idx, &g) in analytic.iter().enumerate() {
        if g.abs() <= threshold {
            continue;
        }
        let original = probe[idx];
        probe[idx] = original + epsilon;
        let plus = penalized_loss(&probe, labels, cfg)?.loss;
        probe[idx] = original - epsilon;
        let minus = penalized_loss(&probe, labels, cfg)?.loss;
        probe[idx] = original;
        let numeric = (plus - minus) / two_eps;
        worst = worst.max((numeric - g).abs() / g.abs());
    }
    Ok(worst)
}
