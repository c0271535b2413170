//! Generational NSGA-II over penalty/weighting genomes.
//!
//! Randomness is split in two: the variation phase draws from a single stream
//! seeded by the master seed, and each fitness evaluation gets its own seed
//! derived from `(master, generation, index)`. Evaluations run on a worker pool
//! and are collected in index order, so the worker count never changes results.

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::genome::{Genome, GenomeLayout};
use super::operators::{polynomial_mutation, sbx_crossover, Variation};
use super::sorting::{crowding_distance, fast_nondominated_sort};
use crate::error::{DispatchError, Result};
use crate::eval::{hypervolume_2d, pareto_indices, EvalPoint};
use crate::loss::DEFAULT_ENS_BETA;
use crate::scenario::SplitName;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoeaConfig {
    pub population: usize,
    pub generations: usize,
    pub sbx_eta: f64,
    pub crossover_prob: f64,
    pub mutation_eta: f64,
    /// Defaults to `1 / genome length` when unset.
    pub mutation_prob: Option<f64>,
    pub penalty_step: f64,
    pub ens_beta: f64,
    pub seed: u64,
    pub workers: usize,
    pub fitness_split: SplitName,
}

impl Default for MoeaConfig {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 50,
            sbx_eta: 20.0,
            crossover_prob: 0.9,
            mutation_eta: 25.0,
            mutation_prob: None,
            penalty_step: 0.5,
            ens_beta: DEFAULT_ENS_BETA,
            seed: 0,
            workers: 1,
            fitness_split: SplitName::Test,
        }
    }
}

impl MoeaConfig {
    pub fn layout(&self, num_models: usize) -> GenomeLayout {
        GenomeLayout {
            num_models,
            penalty_step: self.penalty_step,
            ens_beta: self.ens_beta,
        }
    }

    pub fn variation(&self, genome_len: usize) -> Variation {
        Variation {
            sbx_eta: self.sbx_eta,
            crossover_prob: self.crossover_prob,
            mutation_eta: self.mutation_eta,
            mutation_prob: self.mutation_prob.unwrap_or(1.0 / genome_len as f64),
        }
    }

    fn check(&self) -> Result<()> {
        if self.population < 2 {
            return Err(DispatchError::Config(
                "population must be at least 2".into(),
            ));
        }
        if self.workers == 0 {
            return Err(DispatchError::Config("workers must be at least 1".into()));
        }
        let probs = [Some(self.crossover_prob), self.mutation_prob];
        if probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(DispatchError::Config(
                "probabilities must lie in [0,1]".into(),
            ));
        }
        if !(0.5..=1.0).contains(&self.penalty_step) {
            return Err(DispatchError::Config(
                "penalty_step must lie in [0.5,1]".into(),
            ));
        }
        if !(self.sbx_eta >= 0.0 && self.mutation_eta >= 0.0) {
            return Err(DispatchError::Config(
                "distribution indices must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Fitness function for one genome.
pub trait FitnessEvaluator: Sync {
    fn num_models(&self) -> usize;

    /// Trains and scores one configuration; `seed` drives all of its randomness.
    fn evaluate(
        &self,
        layout: &GenomeLayout,
        genome: &Genome,
        seed: u64,
        tag: &str,
    ) -> Result<EvalPoint<f64>>;

    /// Fitness assigned when an evaluation fails.
    fn worst(&self, tag: &str) -> EvalPoint<f64>;

    /// Fixed `(accuracy_floor, mflops_ceiling)` for hypervolume tracking.
    fn reference(&self) -> (f64, f64);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: EvalPoint<f64>,
    pub rank: usize,
    pub crowding: f64,
    /// Set when training failed and worst-case fitness was assigned.
    pub failure: Option<String>,
}

/// One row of the run transcript: a surviving individual after a generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRow {
    pub generation: usize,
    pub individual: usize,
    pub genome: Vec<f64>,
    pub accuracy: f64,
    pub mflops: f64,
    pub rank: usize,
    pub crowding: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub genome: Genome,
    pub point: EvalPoint<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub population: Vec<Individual>,
    /// Non-dominated subset of everything evaluated, or of the final
    /// population when the archive is not cumulative.
    pub archive: Vec<ArchiveEntry>,
    /// Cumulative archive hypervolume after each generation (entry 0 is the
    /// initial population).
    pub hypervolume: Vec<f64>,
    pub transcript: Vec<TranscriptRow>,
    /// Every evaluation in order.
    pub explored: Vec<ArchiveEntry>,
    pub failures: usize,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for evaluating individual `index` of `generation`.
pub fn derive_seed(master: u64, generation: usize, index: usize) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ (generation as u64).wrapping_mul(GOLDEN));
    splitmix64(
        b ^ (index as u64)
            .wrapping_add(1)
            .wrapping_mul(0xD6E8_FEB8_6659_FD93),
    )
}

fn evaluate_all<E: FitnessEvaluator>(
    evaluator: &E,
    layout: &GenomeLayout,
    genomes: Vec<Genome>,
    generation: usize,
    master_seed: u64,
    pool: &rayon::ThreadPool,
) -> Vec<Individual> {
    pool.install(|| {
        genomes
            .into_par_iter()
            .enumerate()
            .map(|(index, genome)| {
                let tag = format!("g{generation}-i{index}");
                let seed = derive_seed(master_seed, generation, index);
                let (fitness, failure) = match evaluator.evaluate(layout, &genome, seed, &tag) {
                    Ok(point) => (point, None),
                    Err(e) => {
                        warn!("{tag}: evaluation failed, assigning worst fitness: {e}");
                        (evaluator.worst(&tag), Some(e.to_string()))
                    }
                };
                Individual {
                    genome,
                    fitness,
                    rank: 0,
                    crowding: 0.0,
                    failure,
                }
            })
            .collect()
    })
}

/// Fills `rank` and `crowding` for every individual.
fn assign_rank_and_crowding(pop: &mut [Individual]) {
    let points: Vec<EvalPoint<f64>> = pop.iter().map(|i| i.fitness.clone()).collect();
    for (rank, front) in fast_nondominated_sort(&points).into_iter().enumerate() {
        let members: Vec<EvalPoint<f64>> = front.iter().map(|&i| points[i].clone()).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&members)) {
            pop[i].rank = rank;
            pop[i].crowding = d;
        }
    }
}

/// Crowded comparison: lower rank wins, then larger crowding; ties keep `a`.
fn better(a: &Individual, b: &Individual) -> bool {
    a.rank < b.rank || (a.rank == b.rank && a.crowding >= b.crowding)
}

fn tournament<'a, R: Rng>(pop: &'a [Individual], rng: &mut R) -> &'a Individual {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    if better(a, b) {
        a
    } else {
        b
    }
}

fn make_offspring<R: Rng>(
    pop: &[Individual],
    count: usize,
    bounds: &[(f64, f64)],
    variation: &Variation,
    rng: &mut R,
) -> Vec<Genome> {
    let mut children = Vec::with_capacity(count);
    while children.len() < count {
        let p1 = tournament(pop, rng);
        let p2 = tournament(pop, rng);
        let (c1, c2) = sbx_crossover(&p1.genome, &p2.genome, bounds, variation, rng);
        children.push(polynomial_mutation(&c1, bounds, variation, rng));
        if children.len() < count {
            children.push(polynomial_mutation(&c2, bounds, variation, rng));
        }
    }
    children
}

/// Elitist (mu + lambda) truncation by front, then by crowding distance.
fn environmental_selection(mut combined: Vec<Individual>, size: usize) -> Vec<Individual> {
    let points: Vec<EvalPoint<f64>> = combined.iter().map(|i| i.fitness.clone()).collect();
    let mut chosen: Vec<usize> = Vec::with_capacity(size);
    for front in fast_nondominated_sort(&points) {
        if chosen.len() + front.len() <= size {
            chosen.extend(&front);
            if chosen.len() == size {
                break;
            }
            continue;
        }
        let members: Vec<EvalPoint<f64>> = front.iter().map(|&i| points[i].clone()).collect();
        let crowding = crowding_distance(&members);
        let mut order: Vec<usize> = (0..front.len()).collect();
        // stable, so equal crowding keeps index order
        order.sort_by(|&a, &b| crowding[b].total_cmp(&crowding[a]));
        chosen.extend(
            order
                .into_iter()
                .take(size - chosen.len())
                .map(|j| front[j]),
        );
        break;
    }
    chosen.sort_unstable();
    let mut taken: Vec<Option<Individual>> = combined.drain(..).map(Some).collect();
    let mut survivors: Vec<Individual> = chosen
        .into_iter()
        .map(|i| taken[i].take().expect("chosen once"))
        .collect();
    assign_rank_and_crowding(&mut survivors);
    survivors
}

fn update_archive(archive: &mut Vec<ArchiveEntry>, newcomers: &[Individual]) {
    archive.extend(newcomers.iter().map(|i| ArchiveEntry {
        genome: i.genome.clone(),
        point: i.fitness.clone(),
    }));
    let points: Vec<EvalPoint<f64>> = archive.iter().map(|e| e.point.clone()).collect();
    let keep = pareto_indices(&points);
    let mut kept = Vec::with_capacity(keep.len());
    let mut entries: Vec<Option<ArchiveEntry>> = archive.drain(..).map(Some).collect();
    for i in keep {
        kept.push(entries[i].take().expect("kept once"));
    }
    *archive = kept;
}

fn archive_hypervolume(archive: &[ArchiveEntry], reference: (f64, f64)) -> Result<f64> {
    let points: Vec<EvalPoint<f64>> = archive.iter().map(|e| e.point.clone()).collect();
    hypervolume_2d(&points, reference)
}

fn record(transcript: &mut Vec<TranscriptRow>, generation: usize, pop: &[Individual]) {
    transcript.extend(
        pop.iter()
            .enumerate()
            .map(|(individual, ind)| TranscriptRow {
                generation,
                individual,
                genome: ind.genome.genes.clone(),
                accuracy: ind.fitness.accuracy,
                mflops: ind.fitness.mflops_per_image,
                rank: ind.rank,
                crowding: ind.crowding,
            }),
    );
}

/// Runs NSGA-II against an arbitrary fitness evaluator.
///
/// With `cumulative_archive` the archive keeps the non-dominated subset of
/// every point evaluated during the run; otherwise it is the non-dominated
/// subset of the final population.
pub fn nsga2<E: FitnessEvaluator>(
    evaluator: &E,
    cfg: &MoeaConfig,
    cumulative_archive: bool,
) -> Result<RunResult> {
    cfg.check()?;
    let layout = cfg.layout(evaluator.num_models());
    let bounds = layout.bounds();
    let variation = cfg.variation(layout.len());
    let reference = evaluator.reference();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| DispatchError::Config(format!("cannot start worker pool: {e}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial: Vec<Genome> = (0..cfg.population)
        .map(|_| Genome {
            genes: bounds
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..hi))
                .collect(),
        })
        .collect();

    let mut population = evaluate_all(evaluator, &layout, initial, 0, cfg.seed, &pool);
    assign_rank_and_crowding(&mut population);

    let mut explored: Vec<ArchiveEntry> = Vec::new();
    let mut failures = 0;
    let mut note = |batch: &[Individual], explored: &mut Vec<ArchiveEntry>| {
        failures += batch.iter().filter(|i| i.failure.is_some()).count();
        explored.extend(batch.iter().map(|i| ArchiveEntry {
            genome: i.genome.clone(),
            point: i.fitness.clone(),
        }));
    };
    note(&population, &mut explored);

    let mut archive = Vec::new();
    update_archive(&mut archive, &population);
    let mut hypervolume = vec![archive_hypervolume(&archive, reference)?];
    let mut transcript = Vec::new();
    record(&mut transcript, 0, &population);

    for generation in 1..=cfg.generations {
        let children = make_offspring(&population, cfg.population, &bounds, &variation, &mut rng);
        let offspring = evaluate_all(evaluator, &layout, children, generation, cfg.seed, &pool);
        note(&offspring, &mut explored);
        update_archive(&mut archive, &offspring);
        hypervolume.push(archive_hypervolume(&archive, reference)?);

        let mut combined = population;
        combined.extend(offspring);
        population = environmental_selection(combined, cfg.population);
        record(&mut transcript, generation, &population);
        debug!(
            "generation {generation}: archive {} points, hypervolume {:.6}",
            archive.len(),
            hypervolume[generation]
        );
    }

    if !cumulative_archive {
        archive = population
            .iter()
            .filter(|i| i.rank == 0)
            .map(|i| ArchiveEntry {
                genome: i.genome.clone(),
                point: i.fitness.clone(),
            })
            .collect();
    }

    Ok(RunResult {
        population,
        archive,
        hypervolume,
        transcript,
        explored,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Analytic two-objective problem: accuracy rises with gene 1 while the
    /// cost rises with gene 1 and falls with gene 2.
    struct Toy;

    impl FitnessEvaluator for Toy {
        fn num_models(&self) -> usize {
            2
        }

        fn evaluate(
            &self,
            _: &GenomeLayout,
            g: &Genome,
            _: u64,
            tag: &str,
        ) -> Result<EvalPoint<f64>> {
            if g.genes[4] > 2.9 {
                return Err(DispatchError::Diverged {
                    epoch: 0,
                    loss: f64::NAN,
                });
            }
            let x = g.genes[1] / 100.0;
            let y = g.genes[2] / 100.0;
            Ok(EvalPoint::new(tag, x, 1.0 + x * x + (1.0 - y)))
        }

        fn worst(&self, tag: &str) -> EvalPoint<f64> {
            EvalPoint::new(tag, 0.0, 3.0)
        }

        fn reference(&self) -> (f64, f64) {
            (0.0, 3.0)
        }
    }

    fn cfg(seed: u64, workers: usize) -> MoeaConfig {
        MoeaConfig {
            population: 12,
            generations: 15,
            seed,
            workers,
            ..MoeaConfig::default()
        }
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for g in 0..20 {
            for i in 0..50 {
                assert!(seen.insert(derive_seed(7, g, i)));
            }
        }
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let a = nsga2(&Toy, &cfg(3, 1), true).unwrap();
        let b = nsga2(&Toy, &cfg(3, 4), true).unwrap();
        assert_eq!(a, b);
        let c = nsga2(&Toy, &cfg(4, 1), true).unwrap();
        assert_ne!(a.transcript, c.transcript);
    }

    #[test]
    fn hypervolume_never_decreases_and_bounds_hold() {
        let run = nsga2(&Toy, &cfg(5, 2), true).unwrap();
        assert_eq!(run.hypervolume.len(), 16);
        for w in run.hypervolume.windows(2) {
            assert!(w[1] >= w[0]);
        }
        let bounds = cfg(5, 2).layout(2).bounds();
        for row in &run.transcript {
            for (g, (lo, hi)) in row.genome.iter().zip(&bounds) {
                assert!(g >= lo && g <= hi);
            }
        }
        assert_eq!(run.transcript.len(), 16 * 12);
        assert_eq!(run.explored.len(), 16 * 12);
    }

    #[test]
    fn zero_generations_archive_is_initial_front() {
        let config = MoeaConfig {
            generations: 0,
            ..cfg(9, 1)
        };
        let run = nsga2(&Toy, &config, true).unwrap();
        let points: Vec<EvalPoint<f64>> =
            run.population.iter().map(|i| i.fitness.clone()).collect();
        let front: Vec<EvalPoint<f64>> = crate::eval::pareto_front(&points);
        let archive: Vec<EvalPoint<f64>> = run.archive.iter().map(|e| e.point.clone()).collect();
        assert_eq!(archive, front);
        assert_eq!(run.hypervolume.len(), 1);
    }

    #[test]
    fn failures_get_worst_fitness() {
        let run = nsga2(&Toy, &cfg(11, 1), true).unwrap();
        let failed: Vec<&Individual> = run
            .population
            .iter()
            .filter(|i| i.failure.is_some())
            .collect();
        for ind in failed {
            assert_eq!(
                (ind.fitness.accuracy, ind.fitness.mflops_per_image),
                (0.0, 3.0)
            );
        }
    }

    #[test]
    fn population_front_archive_mode() {
        let run = nsga2(&Toy, &cfg(5, 1), false).unwrap();
        assert!(run.archive.iter().all(|e| run
            .population
            .iter()
            .any(|i| i.fitness == e.point && i.rank == 0)));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(nsga2(
            &Toy,
            &MoeaConfig {
                penalty_step: 0.2,
                ..cfg(1, 1)
            },
            true
        )
        .is_err());
        assert!(nsga2(
            &Toy,
            &MoeaConfig {
                population: 1,
                ..cfg(1, 1)
            },
            true
        )
        .is_err());
        assert!(nsga2(
            &Toy,
            &MoeaConfig {
                workers: 0,
                ..cfg(1, 1)
            },
            true
        )
        .is_err());
    }
}
