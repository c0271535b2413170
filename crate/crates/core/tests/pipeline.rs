use dispatch_core::eval::{dominates, EvalPoint};
use dispatch_core::head::{init_head, train_head, TrainConfig};
use dispatch_core::loss::{LossConfig, PenaltyMatrix, WeightingScheme, WeightingSpec};
use dispatch_core::moea::{run_nsga2, MoeaConfig};
use dispatch_core::oracle::{label_counts, oracle_relabel};
use dispatch_core::scenario::{generate_synthetic, SplitName, SyntheticSpec};

fn separable_spec() -> SyntheticSpec {
    SyntheticSpec {
        num_samples: 2000,
        num_models: 2,
        feature_dim: 16,
        costs: vec![1.0, 4.0],
        cluster_separation: 8.0,
        noise_rate: 0.0,
        seed: 11,
        extractor_mflops: 0.5,
        tier_weights: Some(vec![0.5, 0.5]),
    }
}

#[test]
fn separable_scenario_trains_to_high_accuracy() {
    let s = generate_synthetic(&separable_spec()).unwrap();
    let labels = oracle_relabel(&s.correctness).0;
    let counts = label_counts(&labels, 2);
    let loss = LossConfig::new(
        PenaltyMatrix::uniform(2, 1.0).unwrap(),
        WeightingSpec::new(WeightingScheme::Ins),
        &counts,
    )
    .unwrap();
    let head = init_head::<f64>(16, 2, 3).unwrap();
    let (_, history) =
        train_head(&head, &s.features, &labels, &loss, &TrainConfig::default()).unwrap();
    let last = *history.accuracy.last().unwrap();
    assert!(
        last >= 0.99,
        "train accuracy {last} ({:?})",
        history.accuracy
    );
}

#[test]
fn planted_tradeoff_beats_expensive_model() {
    let spec = SyntheticSpec {
        num_samples: 5000,
        num_models: 3,
        feature_dim: 16,
        costs: vec![5.0, 15.0, 40.0],
        cluster_separation: 10.0,
        noise_rate: 0.0,
        seed: 5,
        extractor_mflops: 1.0,
        tier_weights: Some(vec![0.70, 0.20, 0.07, 0.03]),
    };
    let s = generate_synthetic(&spec).unwrap();
    let test = s.split(SplitName::Test);
    let baseline = EvalPoint::new("model2", s.correctness.column_rate(2, test), 40.0);
    let cfg = MoeaConfig {
        population: 20,
        generations: 20,
        seed: 1,
        workers: 4,
        ..MoeaConfig::default()
    };
    let result = run_nsga2::<f64>(&s, &cfg, &TrainConfig::default(), true).unwrap();
    assert!(result.archive.iter().any(|e| dominates(&e.point, &baseline)
        && e.point.accuracy >= baseline.accuracy
        && e.point.mflops_per_image <= 0.8 * baseline.mflops_per_image));
    assert!(result.hypervolume.windows(2).all(|w| w[1] >= w[0]));
}
