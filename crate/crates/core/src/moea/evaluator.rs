use std::marker::PhantomData;

use super::genome::{Genome, GenomeLayout};
use super::nsga2::{nsga2, FitnessEvaluator, MoeaConfig, RunResult};
use crate::error::{DispatchError, Result};
use crate::eval::{evaluate_system, CostModel, EvalPoint};
use crate::head::{
    head_cost_mflops, init_head, train_head, DispatchHead, TrainConfig, TrainHistory,
};
use crate::loss::{LossConfig, PenaltyMatrix, WeightingSpec};
use crate::oracle::{label_counts, oracle_relabel};
use crate::scalar::Scalar;
use crate::scenario::{FeatureMatrix, Scenario, SplitName};

/// Fitness of a genome on a scenario: decode, train a fresh head on the
/// training split, then score the whole system on the fitness split.
pub struct ScenarioEvaluator<'a, T: Scalar = f64> {
    scenario: &'a Scenario,
    train_features: FeatureMatrix,
    train_labels: Vec<usize>,
    class_counts: Vec<usize>,
    cost: CostModel<T>,
    train: TrainConfig,
    fitness_split: SplitName,
    _scalar: PhantomData<T>,
}

impl<'a, T: Scalar> ScenarioEvaluator<'a, T> {
    pub fn new(
        scenario: &'a Scenario,
        train: &TrainConfig,
        fitness_split: SplitName,
    ) -> Result<Self> {
        let train_idx = scenario.split(SplitName::Train);
        if train_idx.is_empty() {
            return Err(DispatchError::EmptyTrainingData);
        }
        if scenario.split(fitness_split).is_empty() {
            return Err(DispatchError::Config(format!(
                "fitness split {fitness_split} is empty"
            )));
        }
        let labels = oracle_relabel(&scenario.correctness);
        let train_labels = labels.select(train_idx);
        let k = scenario.num_models();
        // absent classes count as one sample so every weighting scheme stays defined
        let class_counts = label_counts(&train_labels, k)
            .into_iter()
            .map(|c| c.max(1))
            .collect();
        let head_mflops = head_cost_mflops::<T>(scenario.extractor.feature_dim, k);
        Ok(Self {
            scenario,
            train_features: scenario.features.select(train_idx),
            train_labels,
            class_counts,
            cost: CostModel::from_scenario(scenario, head_mflops),
            train: train.clone(),
            fitness_split,
            _scalar: PhantomData,
        })
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn cost_model(&self) -> &CostModel<T> {
        &self.cost
    }

    /// Trains a fresh head for one configuration on the training split.
    pub fn train_config(
        &self,
        penalties: PenaltyMatrix<T>,
        weighting: WeightingSpec<T>,
        seed: u64,
    ) -> Result<(DispatchHead<T>, TrainHistory<T>)> {
        let loss = LossConfig::new(penalties, weighting, &self.class_counts)?;
        let head = init_head::<T>(
            self.scenario.extractor.feature_dim,
            self.scenario.num_models(),
            seed,
        )?;
        let train = TrainConfig {
            seed,
            ..self.train.clone()
        };
        train_head(
            &head,
            &self.train_features,
            &self.train_labels,
            &loss,
            &train,
        )
    }

    /// Trains and scores one explicit configuration.
    pub fn evaluate_config(
        &self,
        penalties: PenaltyMatrix<T>,
        weighting: WeightingSpec<T>,
        seed: u64,
        tag: &str,
    ) -> Result<EvalPoint<T>> {
        let (head, _) = self.train_config(penalties, weighting, seed)?;
        evaluate_system(&head, self.scenario, self.fitness_split, &self.cost, tag)
    }
}

impl<T: Scalar> FitnessEvaluator for ScenarioEvaluator<'_, T> {
    fn num_models(&self) -> usize {
        self.scenario.num_models()
    }

    fn evaluate(
        &self,
        layout: &GenomeLayout,
        genome: &Genome,
        seed: u64,
        tag: &str,
    ) -> Result<EvalPoint<f64>> {
        let (penalties, weighting) = layout.decode(genome)?;
        let penalties = PenaltyMatrix::new(
            penalties.size(),
            penalties.as_row_major().iter().map(|&p| T::of(p)).collect(),
        )?;
        let weighting = WeightingSpec {
            scheme: weighting.scheme,
            beta: T::of(weighting.beta),
        };
        let point = self.evaluate_config(penalties, weighting, seed, tag)?;
        Ok(EvalPoint::new(
            point.tag,
            point.accuracy.as_f64(),
            point.mflops_per_image.as_f64(),
        ))
    }

    fn worst(&self, tag: &str) -> EvalPoint<f64> {
        EvalPoint::new(tag, 0.0, self.scenario.max_model_cost())
    }

    fn reference(&self) -> (f64, f64) {
        (
            0.0,
            self.cost.overhead().as_f64() + self.scenario.max_model_cost(),
        )
    }
}

/// Explores penalty matrices and weighting schemes for `scenario` with NSGA-II.
pub fn run_nsga2<T: Scalar>(
    scenario: &Scenario,
    cfg: &MoeaConfig,
    train: &TrainConfig,
    fixed_archive: bool,
) -> Result<RunResult> {
    let evaluator = ScenarioEvaluator::<T>::new(scenario, train, cfg.fitness_split)?;
    nsga2(&evaluator, cfg, fixed_archive)
}
