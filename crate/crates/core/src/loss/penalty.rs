use serde::{Deserialize, Serialize};

use crate::error::{DispatchError, Result};
use crate::scalar::Scalar;

/// Largest admissible penalty.
pub const MAX_PENALTY: f64 = 100.0;

/// K x K misclassification penalties; entry (i, j) weighs dispatching a sample
/// that needs model `i` to model `j`. The diagonal is always zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PenaltyMatrix<T: Scalar = f64> {
    size: usize,
    values: Vec<T>,
}

impl<T: Scalar> PenaltyMatrix<T> {
    /// Builds from K² row-major values; the diagonal must already be zero.
    pub fn new(size: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != size * size {
            return Err(DispatchError::DimensionMismatch {
                what: "penalty matrix entries".into(),
                expected: size * size,
                found: values.len(),
            });
        }
        for (idx, &v) in values.iter().enumerate() {
            let value = v.as_f64();
            if !(0.0..=MAX_PENALTY).contains(&value) {
                return Err(DispatchError::PenaltyOutOfRange { value });
            }
            if idx / size == idx % size && v != T::zero() {
                return Err(DispatchError::Config(format!(
                    "penalty diagonal entry ({0},{0}) must be 0, found {value}",
                    idx / size
                )));
            }
        }
        Ok(Self { size, values })
    }

    /// Builds from the K(K-1) off-diagonal entries in row-major order.
    pub fn from_off_diagonal(size: usize, entries: &[T]) -> Result<Self> {
        if entries.len() != size * size.saturating_sub(1) {
            return Err(DispatchError::DimensionMismatch {
                what: "off-diagonal penalties".into(),
                expected: size * size.saturating_sub(1),
                found: entries.len(),
            });
        }
        let mut it = entries.iter();
        let mut values = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                values.push(if i == j {
                    T::zero()
                } else {
                    *it.next().unwrap()
                });
            }
        }
        Self::new(size, values)
    }

    /// Every off-diagonal entry equal to `value`.
    pub fn uniform(size: usize, value: T) -> Result<Self> {
        let values = (0..size * size)
            .map(|idx| {
                if idx / size == idx % size {
                    T::zero()
                } else {
                    value
                }
            })
            .collect();
        Self::new(size, values)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.size + col]
    }

    pub fn as_row_major(&self) -> &[T] {
        &self.values
    }

    pub fn max_entry(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }

    /// Mean of the off-diagonal entries in `row`.
    pub fn row_mean(&self, row: usize) -> T {
        if self.size < 2 {
            return T::zero();
        }
        let sum: T = (0..self.size)
            .filter(|&j| j != row)
            .map(|j| self.get(row, j))
            .sum();
        sum / T::of_usize(self.size - 1)
    }

    pub fn scaled(&self, factor: T) -> Result<Self> {
        Self::new(self.size, self.values.iter().map(|&v| v * factor).collect())
    }
}
