//! Ideal-dispatcher arithmetic over a correctness matrix.
//!
//! The ideal dispatcher sends every sample to the cheapest model that gets it
//! right, and samples nobody gets right to the cheapest model overall. Its
//! accuracy and cost bound what any learned dispatcher can reach.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::scalar::Scalar;
use crate::scenario::CorrectnessMatrix;

/// A K-bit correctness pattern; bit `k` is model `k`'s outcome.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pattern(pub Vec<u8>);

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CombinationHistogram {
    pub width: usize,
    pub entries: BTreeMap<Pattern, usize>,
}

impl CombinationHistogram {
    /// Count for `pattern`; absent patterns count 0.
    pub fn count(&self, pattern: &[u8]) -> usize {
        self.entries
            .get(&Pattern(pattern.to_vec()))
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.entries.values().sum()
    }
}

pub fn combination_histogram(c: &CorrectnessMatrix) -> CombinationHistogram {
    let mut entries = BTreeMap::new();
    for n in 0..c.rows() {
        *entries.entry(Pattern(c.row(n).to_vec())).or_insert(0) += 1;
    }
    CombinationHistogram {
        width: c.models(),
        entries,
    }
}

/// Per-sample index of the cheapest model that is correct (0 when none is).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleLabels(pub Vec<usize>);

impl OracleLabels {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&n| self.0[n]).collect()
    }
}

/// First-hit scan; relies on columns being sorted ascending by cost.
pub fn oracle_relabel(c: &CorrectnessMatrix) -> OracleLabels {
    OracleLabels(
        (0..c.rows())
            .map(|n| c.row(n).iter().position(|&b| b == 1).unwrap_or(0))
            .collect(),
    )
}

pub fn label_counts(labels: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

pub fn label_distribution<T: Scalar>(labels: &OracleLabels, k: usize) -> Vec<T> {
    let n = T::of_usize(labels.len().max(1));
    label_counts(labels.as_slice(), k)
        .into_iter()
        .map(|c| T::of_usize(c) / n)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdealMetrics<T: Scalar = f64> {
    pub ideal_accuracy: T,
    pub ideal_mflops_per_image: T,
    /// `1 - ideal_cost / cost_k` for each single-model baseline.
    pub reduction_vs_each_model: Vec<T>,
    /// `100 * (ideal_accuracy - accuracy_k)`, in percentage points.
    pub accuracy_delta_vs_each_model: Vec<T>,
    pub baseline_accuracy: Vec<T>,
}

pub fn ideal_metrics<T: Scalar>(c: &CorrectnessMatrix, costs: &[T]) -> IdealMetrics<T> {
    let n = c.rows();
    let denom = T::of_usize(n.max(1));
    let labels = oracle_relabel(c);
    let hopeless = (0..n).filter(|&i| c.row(i).iter().all(|&b| b == 0)).count();
    let ideal_accuracy = T::of_usize(n - hopeless) / denom;

    // summing per-class counts times cost keeps the result independent of row order
    let counts = label_counts(labels.as_slice(), c.models());
    let total_cost: T = counts
        .iter()
        .zip(costs)
        .map(|(&count, &cost)| T::of_usize(count) * cost)
        .sum();
    let ideal_mflops_per_image = total_cost / denom;

    let hundred = T::of(100.0);
    let baseline_accuracy: Vec<T> = (0..c.models())
        .map(|k| T::of_usize((0..n).filter(|&i| c.is_correct(i, k)).count()) / denom)
        .collect();
    IdealMetrics {
        ideal_accuracy,
        ideal_mflops_per_image,
        reduction_vs_each_model: costs
            .iter()
            .map(|&cost| T::one() - ideal_mflops_per_image / cost)
            .collect(),
        accuracy_delta_vs_each_model: baseline_accuracy
            .iter()
            .map(|&acc| (ideal_accuracy - acc) * hundred)
            .collect(),
        baseline_accuracy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn table1() -> CorrectnessMatrix {
        let counts: [([u8; 3], usize); 8] = [
            ([1, 1, 1], 6320),
            ([1, 1, 0], 228),
            ([1, 0, 1], 256),
            ([1, 0, 0], 143),
            ([0, 1, 1], 1759),
            ([0, 1, 0], 237),
            ([0, 0, 1], 527),
            ([0, 0, 0], 530),
        ];
        let mut rows = Vec::new();
        for (pattern, count) in counts {
            rows.extend(std::iter::repeat_n(pattern.to_vec(), count));
        }
        CorrectnessMatrix::from_rows(&rows).unwrap()
    }

    fn random_matrix(rows: usize, seed: u64) -> CorrectnessMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..rows * 3)
            .map(|_| u8::from(rng.random_bool(0.5)))
            .collect();
        CorrectnessMatrix::new(rows, 3, values).unwrap()
    }

    #[test]
    fn histogram_reproduces_table_counts() {
        let h = combination_histogram(&table1());
        assert_eq!(h.count(&[1, 1, 1]), 6320);
        assert_eq!(h.count(&[0, 1, 0]), 237);
        assert_eq!(h.count(&[0, 0, 0]), 530);
        assert_eq!(h.total(), 10000);
        assert_eq!(h.width, 3);
    }

    #[test]
    fn histogram_of_all_ones() {
        let c = CorrectnessMatrix::from_rows(&vec![vec![1, 1, 1]; 5]).unwrap();
        let h = combination_histogram(&c);
        assert_eq!(h.entries.len(), 1);
        assert_eq!(h.count(&[1, 1, 1]), 5);
        assert_eq!(h.count(&[0, 1, 1]), 0);
    }

    #[test]
    fn histogram_matches_row_tally() {
        let c = random_matrix(20, 5);
        let h = combination_histogram(&c);
        for bits in 0..8u8 {
            let p = [bits >> 2 & 1, bits >> 1 & 1, bits & 1];
            let tally = (0..20).filter(|&n| c.row(n) == p).count();
            assert_eq!(h.count(&p), tally);
        }
    }

    #[test]
    fn relabel_picks_cheapest_correct() {
        let c = CorrectnessMatrix::from_rows(&[
            vec![0, 1, 1],
            vec![0, 0, 0],
            vec![1, 1, 1],
            vec![0, 0, 1],
        ])
        .unwrap();
        assert_eq!(oracle_relabel(&c).0, vec![1, 0, 0, 2]);
    }

    #[test]
    fn distribution_of_table_labels() {
        let labels = oracle_relabel(&table1());
        assert_eq!(
            label_counts(labels.as_slice(), 3),
            vec![6947 + 530, 1996, 527]
        );
        let d: Vec<f64> = label_distribution(&labels, 3);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let small = OracleLabels(vec![0, 0, 1, 2]);
        assert_eq!(label_distribution::<f64>(&small, 3), vec![0.5, 0.25, 0.25]);
        let uniform = OracleLabels(vec![0, 1, 2, 0, 1, 2]);
        for f in label_distribution::<f64>(&uniform, 3) {
            assert!((f - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ideal_metrics_on_table() {
        let m = ideal_metrics(&table1(), &[5.9f64, 13.57, 21.83]);
        assert_eq!(m.ideal_accuracy, 0.947);
        assert!((m.reduction_vs_each_model[2] * 100.0 - 62.11).abs() < 0.05);
        assert!((m.accuracy_delta_vs_each_model[2] - 6.08).abs() < 0.05);
        assert!((m.baseline_accuracy[0] - 0.6947).abs() < 1e-12);
        assert!((m.baseline_accuracy[2] - 0.8862).abs() < 1e-12);
    }

    #[test]
    fn ideal_metrics_all_correct() {
        let c = CorrectnessMatrix::from_rows(&vec![vec![1, 1, 1]; 7]).unwrap();
        let m = ideal_metrics(&c, &[2.0f32, 4.0, 9.0]);
        assert_eq!(m.ideal_accuracy, 1.0);
        assert_eq!(m.ideal_mflops_per_image, 2.0);
    }

    #[test]
    fn ideal_metrics_match_exhaustive_scan() {
        let c = random_matrix(50, 9);
        let costs = [1.5f64, 4.0, 10.0];
        let m = ideal_metrics(&c, &costs);
        let mut correct = 0usize;
        let mut cost = 0.0;
        for n in 0..50 {
            // brute force: min cost over correct models, else cheapest overall
            let best = (0..3)
                .filter(|&k| c.is_correct(n, k))
                .map(|k| costs[k])
                .fold(f64::INFINITY, f64::min);
            if best.is_finite() {
                correct += 1;
                cost += best;
            } else {
                cost += costs[0];
            }
        }
        assert_eq!(m.ideal_accuracy, correct as f64 / 50.0);
        assert!((m.ideal_mflops_per_image - cost / 50.0).abs() < 1e-12);
    }
}
