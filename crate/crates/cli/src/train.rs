use std::fs::File;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use dispatch_core::eval::{evaluate_system, write_points_csv};
use dispatch_core::loss::{
    class_weights, PenaltyMatrix, WeightingScheme, WeightingSpec, DEFAULT_ENS_BETA,
};
use dispatch_core::moea::ScenarioEvaluator;
use dispatch_core::scenario::SplitName;
use dispatch_core::{DispatchError, EvalPoint, TrainHistory};

use crate::{ensure_dir, load_checked, write_json, TrainFlags};

pub const METRICS_FILE: &str = "metrics.json";
pub const POINTS_FILE: &str = "points.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Comma-separated penalties in ascending-cost model order: K(K-1)
    /// off-diagonal entries row by row, or a full K*K matrix with zero diagonal.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub penalties: Vec<f64>,
    #[arg(long, default_value = "INS")]
    pub scheme: WeightingScheme,
    #[arg(long, default_value_t = DEFAULT_ENS_BETA)]
    pub ens_beta: f64,
    /// One head is trained per seed.
    #[arg(long = "seed", default_values_t = [0u64])]
    pub seeds: Vec<u64>,
    /// Split the trained heads are scored on.
    #[arg(long, default_value = "test")]
    pub split: SplitName,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value = "dispatch-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub seed: u64,
    pub checkpoint: String,
    pub point: EvalPoint,
    pub history: TrainHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub penalties: Vec<Vec<f64>>,
    pub scheme: WeightingScheme,
    pub ens_beta: f64,
    pub split: SplitName,
    pub class_counts: Vec<usize>,
    pub class_weights: Vec<f64>,
    pub runs: Vec<TrainRun>,
    pub mean_accuracy: f64,
    pub mean_mflops_per_image: f64,
}

impl TrainMetrics {
    pub fn summary(&self) -> String {
        let mut lines: Vec<String> = self
            .runs
            .iter()
            .map(|r| {
                format!(
                    "seed {}: accuracy {:.2}% at {:.2} MFLOPs/image",
                    r.seed,
                    100.0 * r.point.accuracy,
                    r.point.mflops_per_image
                )
            })
            .collect();
        if self.runs.len() > 1 {
            lines.push(format!(
                "mean: accuracy {:.2}% at {:.2} MFLOPs/image",
                100.0 * self.mean_accuracy,
                self.mean_mflops_per_image
            ));
        }
        lines.join("\n")
    }

    pub fn outputs(&self) -> Vec<String> {
        let mut out = vec![METRICS_FILE.to_string(), POINTS_FILE.to_string()];
        out.extend(self.runs.iter().map(|r| r.checkpoint.clone()));
        out
    }
}

/// Builds a penalty matrix from either the off-diagonal or the full listing.
pub fn parse_penalties(k: usize, values: &[f64]) -> dispatch_core::Result<PenaltyMatrix> {
    if values.len() == k * (k - 1) {
        PenaltyMatrix::from_off_diagonal(k, values)
    } else if values.len() == k * k {
        PenaltyMatrix::new(k, values.to_vec())
    } else {
        Err(DispatchError::DimensionMismatch {
            what: format!("penalty count (K(K-1) or K*K for K={k})"),
            expected: k * (k - 1),
            found: values.len(),
        })
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainMetrics> {
    let scenario = load_checked(&args.scenario)?;
    let k = scenario.num_models();
    let penalties = parse_penalties(k, &args.penalties)?;
    let weighting = WeightingSpec {
        scheme: args.scheme,
        beta: args.ens_beta,
    };
    if args.seeds.is_empty() {
        return Err(DispatchError::Config("at least one seed is required".into()).into());
    }
    let evaluator = ScenarioEvaluator::<f64>::new(&scenario, &args.train.config(0), args.split)?;
    let weights = class_weights(evaluator.class_counts(), &weighting)?;
    ensure_dir(&args.out_dir)?;

    let mut runs = Vec::with_capacity(args.seeds.len());
    for &seed in &args.seeds {
        let (head, history) = evaluator.train_config(penalties.clone(), weighting, seed)?;
        let tag = format!("seed{seed}");
        let point = evaluate_system(&head, &scenario, args.split, evaluator.cost_model(), tag)?;
        let checkpoint = format!("head_seed{seed}.json");
        head.save(args.out_dir.join(&checkpoint))?;
        runs.push(TrainRun {
            seed,
            checkpoint,
            point,
            history,
        });
    }

    let n = runs.len() as f64;
    let metrics = TrainMetrics {
        penalties: penalties
            .as_row_major()
            .chunks(k)
            .map(<[f64]>::to_vec)
            .collect(),
        scheme: args.scheme,
        ens_beta: args.ens_beta,
        split: args.split,
        class_counts: evaluator.class_counts().to_vec(),
        class_weights: weights,
        mean_accuracy: runs.iter().map(|r| r.point.accuracy).sum::<f64>() / n,
        mean_mflops_per_image: runs.iter().map(|r| r.point.mflops_per_image).sum::<f64>() / n,
        runs,
    };
    write_json(&args.out_dir.join(METRICS_FILE), &metrics)?;
    let points: Vec<EvalPoint> = metrics.runs.iter().map(|r| r.point.clone()).collect();
    let path = args.out_dir.join(POINTS_FILE);
    let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    write_points_csv(&points, file)?;
    Ok(metrics)
}
