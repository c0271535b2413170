//! Whole-system scoring of a dispatcher, and two-objective Pareto utilities.
//!
//! Objectives are system accuracy (maximized) and mean MFLOPs per image
//! (minimized), where the cost of an image covers feature extraction, the
//! head, and the model it is dispatched to.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{DispatchError, Result};
use crate::head::{predict, DispatchHead};
use crate::scalar::Scalar;
use crate::scenario::{CorrectnessMatrix, Scenario, SplitName};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EvalPoint<T: Scalar = f64> {
    pub tag: String,
    pub accuracy: T,
    pub mflops_per_image: T,
}

impl<T: Scalar> EvalPoint<T> {
    pub fn new(tag: impl Into<String>, accuracy: T, mflops_per_image: T) -> Self {
        Self {
            tag: tag.into(),
            accuracy,
            mflops_per_image,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CostModel<T: Scalar = f64> {
    pub extractor_mflops: T,
    pub head_mflops: T,
    pub model_mflops: Vec<T>,
    /// Backbone model index and the cost left once its features are reused.
    pub backbone: Option<(usize, Option<T>)>,
    pub reuse_backbone: bool,
}

impl<T: Scalar> CostModel<T> {
    pub fn from_scenario(s: &Scenario, head_mflops: T) -> Self {
        Self {
            extractor_mflops: T::of(s.extractor.cost_mflops),
            head_mflops,
            model_mflops: s.models.iter().map(|m| T::of(m.cost_mflops)).collect(),
            backbone: s
                .backbone_index()
                .map(|b| (b, s.models[b].residual_mflops.map(T::of))),
            reuse_backbone: false,
        }
    }

    /// Dispatcher overhead paid by every image.
    pub fn overhead(&self) -> T {
        self.extractor_mflops + self.head_mflops
    }

    pub fn sample_cost(&self, model: usize) -> Result<T> {
        let mut model_cost = self.model_mflops[model];
        if self.reuse_backbone {
            if let Some((b, residual)) = self.backbone {
                if b == model {
                    model_cost = residual.ok_or_else(|| {
                        DispatchError::Config(format!(
                            "backbone reuse enabled but model {model} has no residual cost"
                        ))
                    })?;
                }
            }
        }
        Ok(self.overhead() + model_cost)
    }
}

/// Scores explicit dispatch decisions for the samples in `indices`.
pub fn evaluate_predictions<T: Scalar>(
    predictions: &[usize],
    correctness: &CorrectnessMatrix,
    indices: &[usize],
    cost: &CostModel<T>,
    tag: impl Into<String>,
) -> Result<EvalPoint<T>> {
    if predictions.len() != indices.len() {
        return Err(DispatchError::DimensionMismatch {
            what: "predictions vs split".into(),
            expected: indices.len(),
            found: predictions.len(),
        });
    }
    if indices.is_empty() {
        return Err(DispatchError::Config(
            "cannot evaluate an empty split".into(),
        ));
    }
    // per-model tallies keep the sums independent of sample order
    let k = cost.model_mflops.len();
    let mut routed = vec![0usize; k];
    let mut hits = 0usize;
    for (&n, &d) in indices.iter().zip(predictions) {
        routed[d] += 1;
        if correctness.is_correct(n, d) {
            hits += 1;
        }
    }
    let mut total = T::zero();
    for (d, &count) in routed.iter().enumerate() {
        if count > 0 {
            total += T::of_usize(count) * cost.sample_cost(d)?;
        }
    }
    let m = T::of_usize(indices.len());
    Ok(EvalPoint::new(tag, T::of_usize(hits) / m, total / m))
}

pub fn evaluate_system<T: Scalar>(
    head: &DispatchHead<T>,
    scenario: &Scenario,
    split: SplitName,
    cost: &CostModel<T>,
    tag: impl Into<String>,
) -> Result<EvalPoint<T>> {
    let indices = scenario.split(split);
    if indices.is_empty() {
        return Err(DispatchError::Config(format!("split {split} is empty")));
    }
    let features = scenario.features.select(indices);
    let predictions = predict(head, &features)?;
    evaluate_predictions(&predictions, &scenario.correctness, indices, cost, tag)
}

/// `a` is at least as good on both objectives and strictly better on one.
pub fn dominates<T: Scalar>(a: &EvalPoint<T>, b: &EvalPoint<T>) -> bool {
    a.accuracy >= b.accuracy
        && a.mflops_per_image <= b.mflops_per_image
        && (a.accuracy > b.accuracy || a.mflops_per_image < b.mflops_per_image)
}

/// Indices of the non-dominated points, in input order.
pub fn pareto_indices<T: Scalar>(points: &[EvalPoint<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    // cheapest first, most accurate first among equal cost
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&points[a], &points[b]);
        pa.mflops_per_image
            .partial_cmp(&pb.mflops_per_image)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(
                pb.accuracy
                    .partial_cmp(&pa.accuracy)
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
    });
    let mut keep = vec![false; points.len()];
    let mut best: Option<&EvalPoint<T>> = None;
    for &i in &order {
        let p = &points[i];
        match best {
            Some(b) if dominates(b, p) => {}
            Some(b) if b.accuracy >= p.accuracy && b.mflops_per_image == p.mflops_per_image => {
                keep[i] = true;
            }
            _ => {
                keep[i] = true;
                best = Some(p);
            }
        }
    }
    (0..points.len()).filter(|&i| keep[i]).collect()
}

/// Non-dominated subset, stable in input order; duplicates of a front point are kept.
pub fn pareto_front<T: Scalar>(points: &[EvalPoint<T>]) -> Vec<EvalPoint<T>> {
    pareto_indices(points)
        .into_iter()
        .map(|i| points[i].clone())
        .collect()
}

/// Area dominated by `points` and bounded by `reference = (accuracy_floor, mflops_ceiling)`.
pub fn hypervolume_2d<T: Scalar>(points: &[EvalPoint<T>], reference: (T, T)) -> Result<T> {
    let (floor, ceiling) = reference;
    if points
        .iter()
        .any(|p| p.accuracy < floor || p.mflops_per_image > ceiling)
    {
        return Err(DispatchError::ReferenceInsideFront);
    }
    let mut pts: Vec<(T, T)> = points
        .iter()
        .map(|p| (p.mflops_per_image, p.accuracy))
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut area = T::zero();
    let mut height = floor;
    for (i, &(cost, acc)) in pts.iter().enumerate() {
        height = height.max(acc);
        let next = pts.get(i + 1).map_or(ceiling, |p| p.0);
        area += (next - cost) * (height - floor);
    }
    Ok(area)
}

pub fn write_points_csv<T: Scalar, W: Write>(points: &[EvalPoint<T>], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["tag", "accuracy", "mflops_per_image"])?;
    for p in points {
        writer.write_record([
            p.tag.clone(),
            p.accuracy.to_string(),
            p.mflops_per_image.to_string(),
        ])?;
    }
    writer
        .flush()
        .map_err(|e| DispatchError::io("<csv output>", e))?;
    Ok(())
}

pub fn read_points_csv<T: Scalar, R: Read>(input: R) -> Result<Vec<EvalPoint<T>>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 3 {
            return Err(DispatchError::DimensionMismatch {
                what: "eval point columns".into(),
                expected: 3,
                found: record.len(),
            });
        }
        let parse = |field: &str| -> Result<T> {
            field
                .trim()
                .parse::<f64>()
                .map(T::of)
                .map_err(|_| DispatchError::Parse {
                    what: "eval point".into(),
                    value: field.to_string(),
                })
        };
        points.push(EvalPoint::new(
            &record[0],
            parse(&record[1])?,
            parse(&record[2])?,
        ));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(acc: f64, cost: f64) -> EvalPoint<f64> {
        EvalPoint::new("", acc, cost)
    }

    #[test]
    fn dominance_cases() {
        assert!(dominates(&p(0.95, 800.0), &p(0.95, 1259.0)));
        assert!(!dominates(&p(0.9, 10.0), &p(0.9, 10.0)));
        // more accurate and cheaper, so the relation is one-sided
        assert!(!dominates(&p(0.9, 10.0), &p(0.95, 8.0)));
        assert!(dominates(&p(0.95, 8.0), &p(0.9, 10.0)));
        // a genuinely incomparable pair
        assert!(!dominates(&p(0.9, 8.0), &p(0.95, 10.0)));
        assert!(!dominates(&p(0.95, 10.0), &p(0.9, 8.0)));
    }

    #[test]
    fn front_of_small_set() {
        let pts = vec![p(0.9, 10.0), p(0.8, 12.0), p(0.95, 20.0)];
        assert_eq!(pareto_front(&pts), vec![p(0.9, 10.0), p(0.95, 20.0)]);
        assert_eq!(pareto_front(&[p(0.5, 1.0)]), vec![p(0.5, 1.0)]);
        let dup = vec![p(0.9, 10.0), p(0.9, 10.0), p(0.5, 11.0)];
        assert_eq!(pareto_front(&dup).len(), 2);
    }

    #[test]
    fn hypervolume_cases() {
        let c = 50.0;
        let hv = hypervolume_2d(&[p(1.0, 1e-9)], (0.0, c)).unwrap();
        assert!((hv - c).abs() < 1e-6);
        assert_eq!(hypervolume_2d::<f64>(&[], (0.0, c)).unwrap(), 0.0);
        // two-step staircase computed by hand
        let hv = hypervolume_2d(&[p(0.5, 2.0), p(0.8, 6.0)], (0.0, 10.0)).unwrap();
        assert!((hv - (0.5 * 4.0 + 0.8 * 4.0)).abs() < 1e-12);
        assert!(matches!(
            hypervolume_2d(&[p(0.5, 20.0)], (0.0, 10.0)),
            Err(DispatchError::ReferenceInsideFront)
        ));
    }

    #[test]
    fn constant_dispatch_costs() {
        let c = CorrectnessMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1], vec![0, 1]])
            .unwrap();
        let cost = CostModel {
            extractor_mflops: 1.0,
            head_mflops: 0.001,
            model_mflops: vec![5.0, 20.0],
            backbone: None,
            reuse_backbone: false,
        };
        let all = [0, 1, 2, 3];
        let e = evaluate_predictions(&[1, 1, 1, 1], &c, &all, &cost, "k-1").unwrap();
        assert_eq!(e.accuracy, 0.75);
        assert_eq!(e.mflops_per_image, 21.001);
    }

    #[test]
    fn backbone_reuse_uses_residual() {
        let c = CorrectnessMatrix::from_rows(&[vec![1, 0], vec![1, 1]]).unwrap();
        let mut cost = CostModel {
            extractor_mflops: 4.0,
            head_mflops: 0.0,
            model_mflops: vec![5.0, 20.0],
            backbone: Some((0, Some(1.0))),
            reuse_backbone: false,
        };
        let full = evaluate_predictions(&[0, 0], &c, &[0, 1], &cost, "").unwrap();
        assert_eq!(full.mflops_per_image, 9.0);
        cost.reuse_backbone = true;
        let reused = evaluate_predictions(&[0, 0], &c, &[0, 1], &cost, "").unwrap();
        assert_eq!(reused.mflops_per_image, 5.0);
        cost.backbone = Some((0, None));
        assert!(evaluate_predictions(&[0, 0], &c, &[0, 1], &cost, "").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let pts = vec![
            EvalPoint::new("g0-i1", 0.9512345678901234, 802334.0),
            EvalPoint::new("x", 1e-7, 3.25),
        ];
        let mut buf = Vec::new();
        write_points_csv(&pts, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("tag,accuracy,mflops_per_image\n"));
        assert_eq!(read_points_csv::<f64, _>(&buf[..]).unwrap(), pts);
    }

    fn arb_point() -> impl Strategy<Value = EvalPoint<f64>> {
        // coarse grid so ties and duplicates actually occur
        (0u32..20, 0u32..20).prop_map(|(a, c)| p(a as f64 / 20.0, 1.0 + c as f64))
    }

    proptest! {
        #[test]
        fn dominance_is_a_strict_partial_order(a in arb_point(), b in arb_point(), c in arb_point()) {
            prop_assert!(!dominates(&a, &a));
            prop_assert!(!(dominates(&a, &b) && dominates(&b, &a)));
            if dominates(&a, &b) && dominates(&b, &c) {
                prop_assert!(dominates(&a, &c));
            }
        }

        #[test]
        fn front_is_idempotent_and_hypervolume_monotone(
            pts in prop::collection::vec(arb_point(), 0..40),
            extra in arb_point(),
        ) {
            let front = pareto_front(&pts);
            prop_assert_eq!(pareto_front(&front), front.clone());
            let reference = (0.0, 25.0);
            let hv = hypervolume_2d(&pts, reference).unwrap();
            prop_assert!((hypervolume_2d(&front, reference).unwrap() - hv).abs() < 1e-9);
            let mut more = pts.clone();
            more.push(extra);
            prop_assert!(hypervolume_2d(&more, reference).unwrap() >= hv - 1e-12);
        }
    }
}
