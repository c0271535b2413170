use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::{Deserialize, Serialize};

use dispatch_core::scenario::{
    generate_synthetic, load_scenario, validate_scenario, write_scenario, SyntheticSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
}

/// Loads a scenario (any violation is an error) and lists its warnings.
pub fn cmd_validate(args: &ValidateArgs) -> Result<String> {
    let scenario = load_scenario(&args.scenario)?;
    let report = validate_scenario(&scenario);
    let mut out = format!(
        "{}: {} samples, {} models, splits {}/{}/{}\n",
        scenario.name,
        scenario.num_samples(),
        scenario.num_models(),
        scenario.splits.train.len(),
        scenario.splits.val.len(),
        scenario.splits.test.len(),
    );
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    Ok(out)
}

pub const OUTPUT_FILES: [&str; 3] = ["manifest.json", "features.f32", "correctness.csv"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5000)]
    pub samples: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Per-model MFLOPs, strictly ascending; the model count follows.
    #[arg(long, value_delimiter = ',', default_values_t = [5.0, 15.0, 40.0])]
    pub costs: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub extractor_mflops: f64,
    #[arg(long, default_value_t = 10.0)]
    pub separation: f64,
    /// Probability of flipping each correctness bit.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Tier probabilities, K or K+1 values; the extra tier is unsolvable.
    #[arg(long, value_delimiter = ',')]
    pub tier_weights: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "dispatch-out")]
    pub out_dir: PathBuf,
}

impl SynthArgs {
    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            num_samples: self.samples,
            num_models: self.costs.len(),
            feature_dim: self.dim,
            costs: self.costs.clone(),
            cluster_separation: self.separation,
            noise_rate: self.noise,
            seed: self.seed,
            extractor_mflops: self.extractor_mflops,
            tier_weights: self.tier_weights.clone(),
        }
    }
}

/// Writes a synthetic scenario bundle; returns the manifest path.
pub fn cmd_synth(args: &SynthArgs) -> Result<PathBuf> {
    let scenario = generate_synthetic(&args.spec())?;
    Ok(write_scenario(&scenario, &args.out_dir)?)
}
