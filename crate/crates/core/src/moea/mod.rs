//! NSGA-II exploration of penalty matrices and weighting schemes.

mod evaluator;
mod genome;
mod nsga2;
mod operators;
mod sorting;

pub use evaluator::{run_nsga2, ScenarioEvaluator};
pub use genome::{Genome, GenomeLayout, SELECTOR_RANGE};
pub use nsga2::{
    derive_seed, nsga2, ArchiveEntry, FitnessEvaluator, Individual, MoeaConfig, RunResult,
    TranscriptRow,
};
pub use operators::{polynomial_gene, polynomial_mutation, sbx_crossover, sbx_pair, Variation};
pub use sorting::{crowding_distance, fast_nondominated_sort};
