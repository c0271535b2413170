use serde::{Deserialize, Serialize};

use crate::error::{DispatchError, Result};
use crate::loss::{PenaltyMatrix, WeightingScheme, WeightingSpec, MAX_PENALTY};

/// Exclusive upper end of the weighting-selector gene.
pub const SELECTOR_RANGE: f64 = 3.0;

/// Real-valued chromosome: K² penalty genes in row-major order, then one
/// weighting-scheme selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub genes: Vec<f64>,
}

/// How genes map onto a penalty matrix and weighting scheme for K models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenomeLayout {
    pub num_models: usize,
    /// Decoded penalties snap to multiples of this step.
    pub penalty_step: f64,
    pub ens_beta: f64,
}

impl GenomeLayout {
    pub fn len(&self) -> usize {
        self.num_models * self.num_models + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-gene `(lower, upper)` bounds.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(0.0, MAX_PENALTY); self.num_models * self.num_models];
        b.push((0.0, SELECTOR_RANGE));
        b
    }

    pub fn decode(&self, genome: &Genome) -> Result<(PenaltyMatrix<f64>, WeightingSpec<f64>)> {
        let k = self.num_models;
        if genome.genes.len() != self.len() {
            return Err(DispatchError::GenomeLength {
                expected: self.len(),
                found: genome.genes.len(),
                models: k,
            });
        }
        let values = genome.genes[..k * k]
            .iter()
            .enumerate()
            .map(|(idx, &g)| {
                if idx / k == idx % k {
                    0.0
                } else {
                    ((g / self.penalty_step).round() * self.penalty_step).clamp(0.0, MAX_PENALTY)
                }
            })
            .collect();
        let selector = genome.genes[k * k];
        let scheme = match selector.floor() {
            s if s < 1.0 => WeightingScheme::Ins,
            s if s < 2.0 => WeightingScheme::Isns,
            _ => WeightingScheme::Ens,
        };
        let spec = WeightingSpec {
            scheme,
            beta: self.ens_beta,
        };
        Ok((PenaltyMatrix::new(k, values)?, spec))
    }

    pub fn encode(&self, penalties: &PenaltyMatrix<f64>, weighting: &WeightingSpec<f64>) -> Genome {
        let mut genes = penalties.as_row_major().to_vec();
        genes.push(weighting.scheme.index() as f64);
        Genome { genes }
    }
}
