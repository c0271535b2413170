use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use dispatch_core::eval::write_points_csv;
use dispatch_core::loss::{WeightingScheme, DEFAULT_ENS_BETA};
use dispatch_core::moea::{run_nsga2, ArchiveEntry, MoeaConfig, RunResult};
use dispatch_core::scenario::{Scenario, SplitName};
use dispatch_core::EvalPoint;

use crate::report::render_gnuplot_block;
use crate::{ensure_dir, load_checked, write_json, write_text, TrainFlags};

pub const ARCHIVE_CSV: &str = "archive.csv";
pub const ARCHIVE_JSON: &str = "archive.json";
pub const EXPLORED_CSV: &str = "explored.csv";
pub const BASELINES_CSV: &str = "baselines.csv";
pub const TRANSCRIPT_CSV: &str = "transcript.csv";
pub const HYPERVOLUME_CSV: &str = "hypervolume.csv";
pub const PLOT_DAT: &str = "front.dat";

pub const OUTPUT_FILES: [&str; 7] = [
    ARCHIVE_CSV,
    ARCHIVE_JSON,
    EXPLORED_CSV,
    BASELINES_CSV,
    TRANSCRIPT_CSV,
    HYPERVOLUME_CSV,
    PLOT_DAT,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct ExploreArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Population size.
    #[arg(long, default_value_t = 50)]
    pub pop: usize,
    /// Number of generations after the initial population.
    #[arg(long, default_value_t = 50)]
    pub gens: usize,
    /// Split used to score candidate dispatchers.
    #[arg(long, default_value = "test")]
    pub fitness_split: SplitName,
    #[arg(long, default_value = "dispatch-out")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Decoded penalties snap to multiples of this step.
    #[arg(long, default_value_t = 0.5)]
    pub penalty_step: f64,
    #[arg(long, default_value_t = DEFAULT_ENS_BETA)]
    pub ens_beta: f64,
    /// Report the final population's front instead of every point seen.
    #[arg(long)]
    pub final_front_only: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainFlags,
}

impl ExploreArgs {
    pub fn moea_config(&self) -> MoeaConfig {
        MoeaConfig {
            population: self.pop,
            generations: self.gens,
            penalty_step: self.penalty_step,
            ens_beta: self.ens_beta,
            seed: self.seed,
            workers: self.workers,
            fitness_split: self.fitness_split,
            ..MoeaConfig::default()
        }
    }
}

/// An archive point with its decoded configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub tag: String,
    pub accuracy: f64,
    pub mflops_per_image: f64,
    pub penalties: Vec<Vec<f64>>,
    pub scheme: WeightingScheme,
    pub ens_beta: f64,
    pub genome: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreOutcome {
    pub result: RunResult,
    /// Each model run alone on the fitness split, with no dispatcher overhead.
    pub baselines: Vec<EvalPoint>,
}

impl ExploreOutcome {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let evaluations = self.result.explored.len();
        let _ = writeln!(
            out,
            "{evaluations} evaluations, {} failed, {} archive points",
            self.result.failures,
            self.result.archive.len()
        );
        if let Some(hv) = self.result.hypervolume.last() {
            let _ = writeln!(out, "final hypervolume {hv:.2}");
        }
        let mut front: Vec<&EvalPoint> = self.result.archive.iter().map(|e| &e.point).collect();
        front.sort_by(|a, b| a.mflops_per_image.total_cmp(&b.mflops_per_image));
        let width = self
            .baselines
            .iter()
            .chain(front.iter().copied())
            .map(|p| p.tag.len())
            .max()
            .unwrap_or(5);
        let _ = writeln!(out, "{:<width$} {:>9} {:>10}", "point", "acc%", "MFLOPs");
        for p in self.baselines.iter().chain(front) {
            let _ = writeln!(
                out,
                "{:<width$} {:>9.2} {:>10.2}",
                p.tag,
                100.0 * p.accuracy,
                p.mflops_per_image
            );
        }
        out
    }
}

pub fn baseline_points(scenario: &Scenario, split: SplitName) -> Vec<EvalPoint> {
    let indices = scenario.split(split);
    scenario
        .models
        .iter()
        .enumerate()
        .map(|(k, m)| {
            EvalPoint::new(
                format!("baseline-{}", m.name),
                scenario.correctness.column_rate(k, indices),
                m.cost_mflops,
            )
        })
        .collect()
}

pub fn cmd_explore(args: &ExploreArgs) -> Result<ExploreOutcome> {
    let scenario = load_checked(&args.scenario)?;
    let cfg = args.moea_config();
    let result = run_nsga2::<f64>(
        &scenario,
        &cfg,
        &args.train.config(args.seed),
        !args.final_front_only,
    )?;
    let outcome = ExploreOutcome {
        baselines: baseline_points(&scenario, args.fitness_split),
        result,
    };
    ensure_dir(&args.out_dir)?;
    write_outputs(&args.out_dir, &cfg, scenario.num_models(), &outcome)?;
    Ok(outcome)
}

fn points(entries: &[ArchiveEntry]) -> Vec<EvalPoint> {
    entries.iter().map(|e| e.point.clone()).collect()
}

fn write_points(path: &Path, points: &[EvalPoint]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    write_points_csv(points, file)?;
    Ok(())
}

fn write_outputs(dir: &Path, cfg: &MoeaConfig, k: usize, outcome: &ExploreOutcome) -> Result<()> {
    let result = &outcome.result;
    let layout = cfg.layout(k);
    let archive = points(&result.archive);
    let explored = points(&result.explored);

    write_points(&dir.join(ARCHIVE_CSV), &archive)?;
    write_points(&dir.join(EXPLORED_CSV), &explored)?;
    write_points(&dir.join(BASELINES_CSV), &outcome.baselines)?;

    let records = result
        .archive
        .iter()
        .map(|e| {
            let (penalties, weighting) = layout.decode(&e.genome)?;
            Ok(ArchiveRecord {
                tag: e.point.tag.clone(),
                accuracy: e.point.accuracy,
                mflops_per_image: e.point.mflops_per_image,
                penalties: penalties
                    .as_row_major()
                    .chunks(k)
                    .map(<[f64]>::to_vec)
                    .collect(),
                scheme: weighting.scheme,
                ens_beta: weighting.beta,
                genome: e.genome.genes.clone(),
            })
        })
        .collect::<dispatch_core::Result<Vec<_>>>()?;
    write_json(&dir.join(ARCHIVE_JSON), &records)?;

    let mut transcript = csv::Writer::from_path(dir.join(TRANSCRIPT_CSV))?;
    let mut header = vec!["generation".to_string(), "individual".to_string()];
    header.extend((0..layout.len()).map(|i| format!("g{i}")));
    header.extend(["accuracy", "mflops", "rank", "crowding"].map(String::from));
    transcript.write_record(&header)?;
    for row in &result.transcript {
        let mut record = vec![row.generation.to_string(), row.individual.to_string()];
        record.extend(row.genome.iter().map(f64::to_string));
        record.extend([
            row.accuracy.to_string(),
            row.mflops.to_string(),
            row.rank.to_string(),
            row.crowding.to_string(),
        ]);
        transcript.write_record(&record)?;
    }
    transcript.flush()?;

    let mut hv = String::from("generation,hypervolume\n");
    for (generation, value) in result.hypervolume.iter().enumerate() {
        let _ = writeln!(hv, "{generation},{value}");
    }
    write_text(&dir.join(HYPERVOLUME_CSV), &hv)?;

    let mut dat = String::new();
    dat.push_str(&render_gnuplot_block("baselines", &outcome.baselines));
    dat.push_str("\n\n");
    dat.push_str(&render_gnuplot_block("explored", &explored));
    dat.push_str("\n\n");
    dat.push_str(&render_gnuplot_block("front", &archive));
    write_text(&dir.join(PLOT_DAT), &dat)
}
