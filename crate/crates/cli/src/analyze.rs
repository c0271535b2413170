use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::{Deserialize, Serialize};

use dispatch_core::oracle::{
    combination_histogram, ideal_metrics, label_counts, label_distribution, oracle_relabel,
    CombinationHistogram,
};
use dispatch_core::IdealMetrics;

use crate::{ensure_dir, load_checked, write_json};

pub const ANALYSIS_FILE: &str = "analysis.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct AnalyzeArgs {
    /// Scenario manifest (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value = "dispatch-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub name: String,
    pub mflops_per_image: f64,
    pub accuracy: f64,
    pub oracle_share: f64,
}

/// Oracle analysis over every sample of a scenario; models in ascending cost order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub scenario: String,
    pub num_samples: usize,
    pub models: Vec<ModelSummary>,
    pub histogram: CombinationHistogram,
    pub oracle_label_counts: Vec<usize>,
    pub oracle_label_distribution: Vec<f64>,
    pub ideal: IdealMetrics,
}

impl AnalysisReport {
    /// Human-readable tables, rounded to two decimals.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let width = self
            .models
            .iter()
            .map(|m| m.name.len())
            .max()
            .unwrap_or(0)
            .max(5);
        let _ = writeln!(
            out,
            "scenario {} ({} samples)",
            self.scenario, self.num_samples
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<8} {:>8} {:>8}", "pattern", "count", "share%");
        for (pattern, &count) in self.histogram.entries.iter().rev() {
            let share = 100.0 * count as f64 / self.num_samples.max(1) as f64;
            let _ = writeln!(
                out,
                "{:<8} {:>8} {:>8.2}",
                pattern.to_string(),
                count,
                share
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<width$} {:>10} {:>9} {:>8} {:>11} {:>10}",
            "model", "MFLOPs", "acc%", "oracle%", "reduction%", "delta_pp"
        );
        for (k, m) in self.models.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<width$} {:>10.2} {:>9.2} {:>8.2} {:>11.2} {:>10.2}",
                m.name,
                m.mflops_per_image,
                100.0 * m.accuracy,
                100.0 * m.oracle_share,
                100.0 * self.ideal.reduction_vs_each_model[k],
                self.ideal.accuracy_delta_vs_each_model[k],
            );
        }
        let _ = writeln!(
            out,
            "{:<width$} {:>10.2} {:>9.2}",
            "ideal",
            self.ideal.ideal_mflops_per_image,
            100.0 * self.ideal.ideal_accuracy
        );
        out
    }
}

pub fn analyze_scenario(scenario: &dispatch_core::scenario::Scenario) -> AnalysisReport {
    let c = &scenario.correctness;
    let k = scenario.num_models();
    let labels = oracle_relabel(c);
    let distribution = label_distribution::<f64>(&labels, k);
    let ideal = ideal_metrics::<f64>(c, &scenario.costs());
    let models = scenario
        .models
        .iter()
        .enumerate()
        .map(|(i, m)| ModelSummary {
            name: m.name.clone(),
            mflops_per_image: m.cost_mflops,
            accuracy: ideal.baseline_accuracy[i],
            oracle_share: distribution[i],
        })
        .collect();
    AnalysisReport {
        scenario: scenario.name.clone(),
        num_samples: scenario.num_samples(),
        models,
        histogram: combination_histogram(c),
        oracle_label_counts: label_counts(labels.as_slice(), k),
        oracle_label_distribution: distribution,
        ideal,
    }
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<AnalysisReport> {
    let scenario = load_checked(&args.scenario)?;
    let report = analyze_scenario(&scenario);
    ensure_dir(&args.out_dir)?;
    write_json(&args.out_dir.join(ANALYSIS_FILE), &report)?;
    Ok(report)
}
