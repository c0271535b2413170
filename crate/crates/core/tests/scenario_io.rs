use std::fs;

use tempfile::tempdir;

use dispatch_core::scenario::{
    generate_synthetic, load_scenario, write_scenario, SplitName, SyntheticSpec,
};
use dispatch_core::DispatchError;

fn spec() -> SyntheticSpec {
    SyntheticSpec {
        num_samples: 300,
        num_models: 3,
        feature_dim: 5,
        costs: vec![4.0, 9.0, 20.0],
        cluster_separation: 3.0,
        noise_rate: 0.1,
        seed: 12,
        extractor_mflops: 2.0,
        tier_weights: None,
    }
}

#[test]
fn written_bundle_loads_back_identically() {
    let dir = tempdir().unwrap();
    let original = generate_synthetic(&spec()).unwrap();
    let manifest = write_scenario(&original, dir.path()).unwrap();
    let loaded = load_scenario(&manifest).unwrap();
    assert_eq!(loaded, original);

    let bytes = fs::read(dir.path().join("features.f32")).unwrap();
    let expected: Vec<u8> = original
        .features
        .values()
        .iter()
        .flat_map(|x| x.to_le_bytes())
        .collect();
    assert_eq!(bytes, expected);

    // writing the loaded copy reproduces every file
    let again = tempdir().unwrap();
    write_scenario(&loaded, again.path()).unwrap();
    for file in ["manifest.json", "features.f32", "correctness.csv"] {
        assert_eq!(
            fs::read(dir.path().join(file)).unwrap(),
            fs::read(again.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn csv_features_and_default_splits() {
    let dir = tempdir().unwrap();
    let mut features = String::new();
    let mut correctness = String::new();
    for n in 0..50 {
        features.push_str(&format!("{},{}\n", n as f32 * 0.5, -(n as f32)));
        // manifest lists the expensive model first
        correctness.push_str(if n % 3 == 0 { "1,0\n" } else { "1,1\n" });
    }
    fs::write(dir.path().join("f.csv"), features).unwrap();
    fs::write(dir.path().join("c.csv"), correctness).unwrap();
    let manifest = dir.path().join("m.json");
    fs::write(
        &manifest,
        r#"{
  "name": "tiny",
  "extractor": { "name": "small", "mflops_per_image": 1.0, "feature_dim": 2 },
  "models": [
    { "name": "big", "mflops_per_image": 10.0 },
    { "name": "small", "mflops_per_image": 3.0 }
  ],
  "features": { "path": "f.csv", "format": "csv", "rows": 50, "dim": 2 },
  "correctness": { "path": "c.csv" }
}"#,
    )
    .unwrap();

    let s = load_scenario(&manifest).unwrap();
    assert_eq!(s.models[0].name, "small");
    assert_eq!(s.original_order, vec![1, 0]);
    assert_eq!(s.correctness.row(0), &[0, 1]);
    assert_eq!(s.correctness.row(1), &[1, 1]);
    assert_eq!(s.features.row(3), &[1.5, -3.0]);
    assert!(s.models[0].is_extractor_backbone);

    let sizes = [SplitName::Train, SplitName::Val, SplitName::Test].map(|n| s.split(n).len());
    assert_eq!(sizes, [40, 5, 5]);
    let mut all: Vec<usize> = [SplitName::Train, SplitName::Val, SplitName::Test]
        .iter()
        .flat_map(|&n| s.split(n).to_vec())
        .collect();
    all.sort_unstable();
    assert_eq!(all, (0..50).collect::<Vec<_>>());
}

#[test]
fn truncated_payload_and_bad_json_are_rejected() {
    let dir = tempdir().unwrap();
    let manifest = write_scenario(&generate_synthetic(&spec()).unwrap(), dir.path()).unwrap();
    let path = dir.path().join("features.f32");
    let mut bytes = fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 4);
    fs::write(&path, bytes).unwrap();
    let err = load_scenario(&manifest).unwrap_err();
    assert!(
        matches!(err, DispatchError::DimensionMismatch { .. }),
        "{err}"
    );
    assert!(err.is_validation());

    fs::write(&manifest, "{\"name\": ").unwrap();
    let err = load_scenario(&manifest).unwrap_err();
    assert!(matches!(err, DispatchError::Manifest { .. }), "{err}");

    let err = load_scenario(dir.path().join("absent.json")).unwrap_err();
    assert!(!err.is_validation());
}
