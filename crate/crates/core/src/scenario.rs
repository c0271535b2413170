//! Scenario bundles: features, per-model correctness, cost profiles and splits.
//!
//! A scenario on disk is a JSON manifest pointing at a feature file (`f32le` or
//! `csv`) and a correctness CSV. Models are always held sorted ascending by cost;
//! `original_order` remembers the manifest order so a scenario can be written
//! back byte-for-byte.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DispatchError, Result};

/// Split fractions used when a manifest carries no explicit split lists.
pub const DEFAULT_SPLIT_FRACTIONS: (f64, f64, f64) = (0.8, 0.1, 0.1);
/// Seed for the default split, so manifests without splits load deterministically.
pub const DEFAULT_SPLIT_SEED: u64 = 0;

/// Oracle labels above this share of the data trigger an imbalance warning.
const SEVERE_IMBALANCE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    /// MFLOPs for one single-image inference.
    pub cost_mflops: f64,
    /// This model's backbone is also the dispatcher's feature extractor.
    pub is_extractor_backbone: bool,
    /// Cost of the classifier layers left to run when the backbone output is reused.
    pub residual_mflops: Option<f64>,
}

impl ModelProfile {
    pub fn new(name: impl Into<String>, cost_mflops: f64) -> Self {
        Self {
            name: name.into(),
            cost_mflops,
            is_extractor_backbone: false,
            residual_mflops: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorProfile {
    pub name: String,
    pub cost_mflops: f64,
    pub feature_dim: usize,
}

/// Row-major `rows x dim` feature payload.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != rows * dim {
            return Err(DispatchError::DimensionMismatch {
                what: "feature values".into(),
                expected: rows * dim,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DispatchError::NonFiniteFeature {
                row: pos / dim.max(1),
                col: pos % dim.max(1),
            });
        }
        Ok(Self { rows, dim, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, n: usize) -> &[f32] {
        &self.values[n * self.dim..(n + 1) * self.dim]
    }

    /// Copies the given rows into a new matrix, preserving their order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &n in indices {
            values.extend_from_slice(self.row(n));
        }
        FeatureMatrix {
            rows: indices.len(),
            dim: self.dim,
            values,
        }
    }
}

/// Binary `rows x models` matrix; entry (n, k) is 1 iff model k classifies sample n correctly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectnessMatrix {
    rows: usize,
    models: usize,
    values: Vec<u8>,
}

impl CorrectnessMatrix {
    pub fn new(rows: usize, models: usize, values: Vec<u8>) -> Result<Self> {
        if models < 2 {
            return Err(DispatchError::TooFewModels(models));
        }
        if values.len() != rows * models {
            return Err(DispatchError::DimensionMismatch {
                what: "correctness values".into(),
                expected: rows * models,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|&v| v > 1) {
            return Err(DispatchError::NonBinaryCorrectness {
                row: pos / models,
                col: pos % models,
                value: values[pos].to_string(),
            });
        }
        Ok(Self {
            rows,
            models,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let models = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * models);
        for (n, row) in rows.iter().enumerate() {
            if row.len() != models {
                return Err(DispatchError::DimensionMismatch {
                    what: format!("correctness row {n}"),
                    expected: models,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), models, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn models(&self) -> usize {
        self.models
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn row(&self, n: usize) -> &[u8] {
        &self.values[n * self.models..(n + 1) * self.models]
    }

    pub fn is_correct(&self, n: usize, k: usize) -> bool {
        self.values[n * self.models + k] == 1
    }

    /// Fraction of `indices` that model `k` gets right; all rows when `indices` is empty.
    pub fn column_rate(&self, k: usize, indices: &[usize]) -> f64 {
        if indices.is_empty() {
            let hits = (0..self.rows).filter(|&n| self.is_correct(n, k)).count();
            return hits as f64 / self.rows.max(1) as f64;
        }
        let hits = indices.iter().filter(|&&n| self.is_correct(n, k)).count();
        hits as f64 / indices.len() as f64
    }

    /// Column-permuted copy: column `k` of the result is column `order[k]` of `self`.
    pub fn permute_columns(&self, order: &[usize]) -> CorrectnessMatrix {
        let mut values = Vec::with_capacity(self.values.len());
        for n in 0..self.rows {
            let row = self.row(n);
            values.extend(order.iter().map(|&k| row[k]));
        }
        CorrectnessMatrix {
            rows: self.rows,
            models: order.len(),
            values,
        }
    }

    /// Restricts to the given rows, in order.
    pub fn select(&self, indices: &[usize]) -> CorrectnessMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.models);
        for &n in indices {
            values.extend_from_slice(self.row(n));
        }
        CorrectnessMatrix {
            rows: indices.len(),
            models: self.models,
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl FromStr for SplitName {
    type Err = DispatchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(DispatchError::UnknownSplit(other.to_string())),
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    #[serde(default)]
    pub val: Vec<usize>,
    #[serde(default)]
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, name: SplitName) -> &[usize] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub features: FeatureMatrix,
    /// Columns follow `models`, i.e. ascending cost.
    pub correctness: CorrectnessMatrix,
    pub models: Vec<ModelProfile>,
    pub extractor: ExtractorProfile,
    pub splits: Splits,
    /// `original_order[k]` is the manifest position of sorted model `k`.
    pub original_order: Vec<usize>,
}

impl Scenario {
    /// Assembles a scenario, sorting models by cost and validating every invariant.
    pub fn new(
        name: impl Into<String>,
        features: FeatureMatrix,
        correctness: CorrectnessMatrix,
        models: Vec<ModelProfile>,
        extractor: ExtractorProfile,
        splits: Splits,
    ) -> Result<Self> {
        if correctness.models() != models.len() {
            return Err(DispatchError::DimensionMismatch {
                what: "correctness columns vs models".into(),
                expected: models.len(),
                found: correctness.models(),
            });
        }
        let mut order: Vec<usize> = (0..models.len()).collect();
        order.sort_by(|&a, &b| models[a].cost_mflops.total_cmp(&models[b].cost_mflops));
        let sorted_models = order.iter().map(|&k| models[k].clone()).collect();
        let scenario = Scenario {
            name: name.into(),
            correctness: correctness.permute_columns(&order),
            features,
            models: sorted_models,
            extractor,
            splits,
            original_order: order,
        };
        let report = validate_scenario(&scenario);
        if !report.violations.is_empty() {
            return Err(DispatchError::Validation(report.violations));
        }
        Ok(scenario)
    }

    pub fn num_samples(&self) -> usize {
        self.correctness.rows()
    }

    pub fn num_models(&self) -> usize {
        self.models.len()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.cost_mflops).collect()
    }

    pub fn split(&self, name: SplitName) -> &[usize] {
        self.splits.get(name)
    }

    pub fn backbone_index(&self) -> Option<usize> {
        self.models.iter().position(|m| m.is_extractor_backbone)
    }

    pub fn max_model_cost(&self) -> f64 {
        self.models
            .iter()
            .map(|m| m.cost_mflops)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewModels(usize),
    NonPositiveCost { model: String, cost: f64 },
    NotStrictlyAscending { first: String, second: String },
    DuplicateModelName(String),
    ZeroFeatureDim,
    FeatureDimMismatch { extractor: usize, features: usize },
    RowMismatch { features: usize, correctness: usize },
    ColumnMismatch { models: usize, correctness: usize },
    NonFiniteFeature { row: usize, col: usize },
    NonBinaryCorrectness { row: usize, col: usize },
    NegativeExtractorCost(f64),
    SplitIndexOutOfRange { split: SplitName, index: usize },
    SplitsNotDisjoint { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewModels(k) => write!(f, "need at least 2 models, found {k}"),
            Violation::NonPositiveCost { model, cost } => {
                write!(f, "model {model:?} has non-positive cost {cost}")
            }
            Violation::NotStrictlyAscending { first, second } => {
                write!(
                    f,
                    "models {first:?} and {second:?} not strictly ascending by cost"
                )
            }
            Violation::DuplicateModelName(name) => write!(f, "duplicate model name {name:?}"),
            Violation::ZeroFeatureDim => write!(f, "feature_dim must be at least 1"),
            Violation::FeatureDimMismatch {
                extractor,
                features,
            } => write!(
                f,
                "extractor feature_dim {extractor} differs from feature matrix dim {features}"
            ),
            Violation::RowMismatch {
                features,
                correctness,
            } => write!(
                f,
                "feature rows {features} differ from correctness rows {correctness}"
            ),
            Violation::ColumnMismatch {
                models,
                correctness,
            } => write!(f, "{models} models but {correctness} correctness columns"),
            Violation::NonFiniteFeature { row, col } => {
                write!(f, "non-finite feature at ({row}, {col})")
            }
            Violation::NonBinaryCorrectness { row, col } => {
                write!(f, "non-binary correctness at ({row}, {col})")
            }
            Violation::NegativeExtractorCost(c) => write!(f, "negative extractor cost {c}"),
            Violation::SplitIndexOutOfRange { split, index } => {
                write!(f, "{split} split index {index} out of range")
            }
            Violation::SplitsNotDisjoint { index } => {
                write!(f, "splits not disjoint: index {index} appears twice")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// A dispatch target is less accurate than the extractor's own model.
    BelowBackboneAccuracy {
        model: String,
        rate: f64,
        backbone: String,
        backbone_rate: f64,
    },
    SevereImbalance {
        class: usize,
        fraction: f64,
    },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::BelowBackboneAccuracy {
                model,
                rate,
                backbone,
                backbone_rate,
            } => write!(
                f,
                "model {model:?} correctness {rate:.4} is below backbone {backbone:?} at {backbone_rate:.4}"
            ),
            Warning::SevereImbalance { class, fraction } => write!(
                f,
                "oracle label {class} holds {:.2}% of samples",
                fraction * 100.0
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Warning>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every scenario invariant and collects advisory warnings.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut report = ValidationReport::default();
    let v = &mut report.violations;

    if s.models.len() < 2 {
        v.push(Violation::TooFewModels(s.models.len()));
    }
    let mut seen = HashSet::new();
    for m in &s.models {
        if !(m.cost_mflops > 0.0) || !m.cost_mflops.is_finite() {
            v.push(Violation::NonPositiveCost {
                model: m.name.clone(),
                cost: m.cost_mflops,
            });
        }
        if !seen.insert(m.name.as_str()) {
            v.push(Violation::DuplicateModelName(m.name.clone()));
        }
    }
    for pair in s.models.windows(2) {
        if !(pair[0].cost_mflops < pair[1].cost_mflops) {
            v.push(Violation::NotStrictlyAscending {
                first: pair[0].name.clone(),
                second: pair[1].name.clone(),
            });
        }
    }
    if s.extractor.feature_dim == 0 {
        v.push(Violation::ZeroFeatureDim);
    }
    if !(s.extractor.cost_mflops >= 0.0) {
        v.push(Violation::NegativeExtractorCost(s.extractor.cost_mflops));
    }
    if s.extractor.feature_dim != s.features.dim() {
        v.push(Violation::FeatureDimMismatch {
            extractor: s.extractor.feature_dim,
            features: s.features.dim(),
        });
    }
    if s.features.rows() != s.correctness.rows() {
        v.push(Violation::RowMismatch {
            features: s.features.rows(),
            correctness: s.correctness.rows(),
        });
    }
    if s.correctness.models() != s.models.len() {
        v.push(Violation::ColumnMismatch {
            models: s.models.len(),
            correctness: s.correctness.models(),
        });
    }
    let dim = s.features.dim().max(1);
    if let Some(pos) = s.features.values().iter().position(|x| !x.is_finite()) {
        v.push(Violation::NonFiniteFeature {
            row: pos / dim,
            col: pos % dim,
        });
    }
    let k = s.correctness.models().max(1);
    if let Some(pos) = s.correctness.values().iter().position(|&b| b > 1) {
        v.push(Violation::NonBinaryCorrectness {
            row: pos / k,
            col: pos % k,
        });
    }

    let n = s.num_samples();
    let mut used = vec![false; n];
    for name in [SplitName::Train, SplitName::Val, SplitName::Test] {
        for &index in s.split(name) {
            if index >= n {
                v.push(Violation::SplitIndexOutOfRange { split: name, index });
            } else if used[index] {
                v.push(Violation::SplitsNotDisjoint { index });
            } else {
                used[index] = true;
            }
        }
    }

    if !report.violations.is_empty() {
        return report;
    }

    let test = s.split(SplitName::Test);
    if let Some(b) = s.backbone_index() {
        let backbone_rate = s.correctness.column_rate(b, test);
        for (k, m) in s.models.iter().enumerate() {
            let rate = s.correctness.column_rate(k, test);
            if k != b && rate < backbone_rate {
                report.warnings.push(Warning::BelowBackboneAccuracy {
                    model: m.name.clone(),
                    rate,
                    backbone: s.models[b].name.clone(),
                    backbone_rate,
                });
            }
        }
    }
    let labels = crate::oracle::oracle_relabel(&s.correctness);
    let fractions: Vec<f64> = crate::oracle::label_distribution(&labels, s.num_models());
    for (class, &fraction) in fractions.iter().enumerate() {
        if fraction > SEVERE_IMBALANCE {
            report
                .warnings
                .push(Warning::SevereImbalance { class, fraction });
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    F32le,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorEntry {
    pub name: String,
    pub mflops_per_image: f64,
    pub feature_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    pub mflops_per_image: f64,
    /// Defaults to `name == extractor.name` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_mflops: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesEntry {
    pub path: PathBuf,
    pub format: FeatureFormat,
    pub rows: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessEntry {
    pub path: PathBuf,
    #[serde(default = "csv_format")]
    pub format: String,
}

fn csv_format() -> String {
    "csv".to_string()
}

/// On-disk scenario manifest. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub extractor: ExtractorEntry,
    pub models: Vec<ModelEntry>,
    pub features: FeaturesEntry,
    pub correctness: CorrectnessEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<Splits>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| DispatchError::io(path, e))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_features(
    path: &Path,
    format: FeatureFormat,
    rows: usize,
    dim: usize,
) -> Result<FeatureMatrix> {
    let values = match format {
        FeatureFormat::F32le => {
            let bytes = read_bytes(path)?;
            if bytes.len() != rows * dim * 4 {
                return Err(DispatchError::DimensionMismatch {
                    what: format!("f32le payload bytes in {}", path.display()),
                    expected: rows * dim * 4,
                    found: bytes.len(),
                });
            }
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect()
        }
        FeatureFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .trim(csv::Trim::All)
                .flexible(true)
                .from_path(path)
                .map_err(|e| match e.into_kind() {
                    csv::ErrorKind::Io(io) => DispatchError::io(path, io),
                    other => DispatchError::Manifest {
                        path: path.to_path_buf(),
                        message: format!("{other:?}"),
                    },
                })?;
            let mut values = Vec::with_capacity(rows * dim);
            let mut seen_rows = 0;
            for (n, record) in reader.records().enumerate() {
                let record = record?;
                if record.len() != dim {
                    return Err(DispatchError::DimensionMismatch {
                        what: format!("feature row {n} in {}", path.display()),
                        expected: dim,
                        found: record.len(),
                    });
                }
                for field in record.iter() {
                    let x: f32 = field.parse().map_err(|_| DispatchError::Parse {
                        what: format!("feature row {n}"),
                        value: field.to_string(),
                    })?;
                    values.push(x);
                }
                seen_rows += 1;
            }
            if seen_rows != rows {
                return Err(DispatchError::DimensionMismatch {
                    what: format!("feature rows in {}", path.display()),
                    expected: rows,
                    found: seen_rows,
                });
            }
            values
        }
    };
    FeatureMatrix::new(rows, dim, values)
}

pub fn read_correctness(path: &Path, models: usize) -> Result<CorrectnessMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => DispatchError::io(path, io),
            other => DispatchError::Manifest {
                path: path.to_path_buf(),
                message: format!("{other:?}"),
            },
        })?;
    let mut values = Vec::new();
    let mut rows = 0;
    for (n, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != models {
            return Err(DispatchError::DimensionMismatch {
                what: format!("correctness row {n} in {}", path.display()),
                expected: models,
                found: record.len(),
            });
        }
        for (k, field) in record.iter().enumerate() {
            let bit = match field {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(DispatchError::NonBinaryCorrectness {
                        row: n,
                        col: k,
                        value: other.to_string(),
                    })
                }
            };
            values.push(bit);
        }
        rows += 1;
    }
    CorrectnessMatrix::new(rows, models, values)
}

/// Loads and validates a scenario from its JSON manifest.
pub fn load_scenario(manifest_path: impl AsRef<Path>) -> Result<Scenario> {
    let manifest_path = manifest_path.as_ref();
    let text =
        fs::read_to_string(manifest_path).map_err(|e| DispatchError::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| DispatchError::Manifest {
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    scenario_from_manifest(&manifest, base)
}

pub fn scenario_from_manifest(manifest: &Manifest, base: &Path) -> Result<Scenario> {
    let k = manifest.models.len();
    if k < 2 {
        return Err(DispatchError::TooFewModels(k));
    }
    let mut names = HashSet::new();
    for m in &manifest.models {
        if !names.insert(m.name.as_str()) {
            return Err(DispatchError::DuplicateModelName(m.name.clone()));
        }
    }
    if manifest.features.dim != manifest.extractor.feature_dim {
        return Err(DispatchError::DimensionMismatch {
            what: "features.dim vs extractor.feature_dim".into(),
            expected: manifest.extractor.feature_dim,
            found: manifest.features.dim,
        });
    }
    let features = read_features(
        &resolve(base, &manifest.features.path),
        manifest.features.format,
        manifest.features.rows,
        manifest.features.dim,
    )?;
    let correctness = read_correctness(&resolve(base, &manifest.correctness.path), k)?;
    if correctness.rows() != manifest.features.rows {
        return Err(DispatchError::DimensionMismatch {
            what: "correctness rows vs features.rows".into(),
            expected: manifest.features.rows,
            found: correctness.rows(),
        });
    }

    let models = manifest
        .models
        .iter()
        .map(|m| ModelProfile {
            name: m.name.clone(),
            cost_mflops: m.mflops_per_image,
            is_extractor_backbone: m.backbone.unwrap_or(m.name == manifest.extractor.name),
            residual_mflops: m.residual_mflops,
        })
        .collect();
    let extractor = ExtractorProfile {
        name: manifest.extractor.name.clone(),
        cost_mflops: manifest.extractor.mflops_per_image,
        feature_dim: manifest.extractor.feature_dim,
    };
    let scenario = Scenario::new(
        manifest.name.clone(),
        features,
        correctness,
        models,
        extractor,
        manifest.splits.clone().unwrap_or_default(),
    )?;
    if manifest.splits.is_none() {
        return split_scenario(&scenario, DEFAULT_SPLIT_FRACTIONS, DEFAULT_SPLIT_SEED);
    }
    Ok(scenario)
}

/// Writes `manifest.json`, `features.f32` and `correctness.csv` into `dir`,
/// restoring the original model order. Returns the manifest path.
pub fn write_scenario(s: &Scenario, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| DispatchError::io(dir, e))?;

    // sorted position of each original model
    let mut inverse = vec![0; s.original_order.len()];
    for (sorted, &orig) in s.original_order.iter().enumerate() {
        inverse[orig] = sorted;
    }

    let feature_path = dir.join("features.f32");
    let mut bytes = Vec::with_capacity(s.features.values().len() * 4);
    for x in s.features.values() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(&feature_path, bytes).map_err(|e| DispatchError::io(&feature_path, e))?;

    let correctness_path = dir.join("correctness.csv");
    let original = s.correctness.permute_columns(&inverse);
    let mut text = String::with_capacity(original.values().len() * 2);
    for n in 0..original.rows() {
        let row: Vec<&str> = original
            .row(n)
            .iter()
            .map(|&b| if b == 1 { "1" } else { "0" })
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(&correctness_path, text).map_err(|e| DispatchError::io(&correctness_path, e))?;

    let manifest = Manifest {
        name: s.name.clone(),
        extractor: ExtractorEntry {
            name: s.extractor.name.clone(),
            mflops_per_image: s.extractor.cost_mflops,
            feature_dim: s.extractor.feature_dim,
        },
        models: inverse
            .iter()
            .map(|&k| {
                let m = &s.models[k];
                ModelEntry {
                    name: m.name.clone(),
                    mflops_per_image: m.cost_mflops,
                    backbone: Some(m.is_extractor_backbone),
                    residual_mflops: m.residual_mflops,
                }
            })
            .collect(),
        features: FeaturesEntry {
            path: PathBuf::from("features.f32"),
            format: FeatureFormat::F32le,
            rows: s.features.rows(),
            dim: s.features.dim(),
        },
        correctness: CorrectnessEntry {
            path: PathBuf::from("correctness.csv"),
            format: csv_format(),
        },
        splits: Some(s.splits.clone()),
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&manifest_path, json).map_err(|e| DispatchError::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Fills the splits with a seeded shuffle partition.
pub fn split_scenario(s: &Scenario, fractions: (f64, f64, f64), seed: u64) -> Result<Scenario> {
    let (train, val, test) = fractions;
    let all = [train, val, test];
    if all.iter().any(|f| !(*f > 0.0) || !f.is_finite())
        || ((train + val + test) - 1.0).abs() > 1e-9
    {
        return Err(DispatchError::InvalidFractions(all));
    }
    let n = s.num_samples();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let n_train = ((n as f64) * train).round() as usize;
    let n_train = n_train.min(n);
    let n_val = (((n as f64) * val).round() as usize).min(n - n_train);
    let mut out = s.clone();
    out.splits = Splits {
        train: indices[..n_train].to_vec(),
        val: indices[n_train..n_train + n_val].to_vec(),
        test: indices[n_train + n_val..].to_vec(),
    };
    Ok(out)
}

/// Parameters for a synthetic scenario with a planted cost/accuracy structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_samples: usize,
    pub num_models: usize,
    pub feature_dim: usize,
    /// Strictly ascending, one per model.
    pub costs: Vec<f64>,
    pub cluster_separation: f64,
    /// Probability of flipping each correctness bit.
    pub noise_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub extractor_mflops: f64,
    /// Intended-tier probabilities. Length K, or K+1 where the extra tier is
    /// samples no model gets right. Defaults to weights proportional to `3^-k`.
    #[serde(default)]
    pub tier_weights: Option<Vec<f64>>,
}

impl SyntheticSpec {
    fn check(&self) -> Result<()> {
        let k = self.num_models;
        if k < 2 {
            return Err(DispatchError::TooFewModels(k));
        }
        if self.feature_dim == 0 {
            return Err(DispatchError::Config(
                "feature_dim must be at least 1".into(),
            ));
        }
        if self.costs.len() != k {
            return Err(DispatchError::DimensionMismatch {
                what: "synthetic costs".into(),
                expected: k,
                found: self.costs.len(),
            });
        }
        if self.costs.iter().any(|c| !(*c > 0.0)) || self.costs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(DispatchError::Config(
                "synthetic costs must be positive and strictly ascending".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(DispatchError::Config("noise_rate must lie in [0,1]".into()));
        }
        if !(self.cluster_separation >= 0.0) {
            return Err(DispatchError::Config(
                "cluster_separation must be nonnegative".into(),
            ));
        }
        if let Some(w) = &self.tier_weights {
            if w.len() != k && w.len() != k + 1 {
                return Err(DispatchError::Config(format!(
                    "tier_weights must have {k} or {} entries",
                    k + 1
                )));
            }
            if w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(DispatchError::Config(
                    "tier_weights must be nonnegative with positive sum".into(),
                ));
            }
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        self.tier_weights.clone().unwrap_or_else(|| {
            (0..self.num_models)
                .map(|k| 3f64.powi(-(k as i32)))
                .collect()
        })
    }
}

/// Deterministic synthetic scenario: clustered features, nested-plus-noise correctness.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Scenario> {
    spec.check()?;
    let k = spec.num_models;
    let d = spec.feature_dim;
    let weights = spec.weights();
    let tiers = weights.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0f64, 1.0).expect("unit normal");

    // Axis-aligned centers are exactly `cluster_separation` apart; beyond D
    // dimensions the remaining centers get random directions of the same radius.
    let radius = spec.cluster_separation / std::f64::consts::SQRT_2;
    let mut centers = vec![vec![0.0f64; d]; tiers];
    for (t, center) in centers.iter_mut().enumerate() {
        if t < d {
            center[t] = radius;
        } else {
            let dir: Vec<f64> = (0..d).map(|_| unit.sample(&mut rng)).collect();
            let norm = dir
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            for (c, x) in center.iter_mut().zip(dir) {
                *c = radius * x / norm;
            }
        }
    }

    let picker = WeightedIndex::new(&weights).map_err(|e| DispatchError::Config(e.to_string()))?;
    let n = spec.num_samples;
    let mut features = Vec::with_capacity(n * d);
    let mut correctness = Vec::with_capacity(n * k);
    // Label noise draws from its own stream so features do not depend on the rate.
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(1);
    for _ in 0..n {
        let tier = picker.sample(&mut rng);
        for &c in &centers[tier] {
            features.push((c + unit.sample(&mut rng)) as f32);
        }
        for model in 0..k {
            let base = u8::from(tier <= model);
            let flip = noise_rng.random::<f64>() < spec.noise_rate;
            correctness.push(if flip { 1 - base } else { base });
        }
    }

    let models = spec
        .costs
        .iter()
        .enumerate()
        .map(|(i, &c)| ModelProfile::new(format!("model{i}"), c))
        .collect();
    let scenario = Scenario::new(
        format!("synthetic-{}", spec.seed),
        FeatureMatrix::new(n, d, features)?,
        CorrectnessMatrix::new(n, k, correctness)?,
        models,
        ExtractorProfile {
            name: "synthetic-extractor".into(),
            cost_mflops: spec.extractor_mflops,
            feature_dim: d,
        },
        Splits::default(),
    )?;
    split_scenario(&scenario, DEFAULT_SPLIT_FRACTIONS, spec.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(models: Vec<ModelProfile>, rows: &[Vec<u8>]) -> Result<Scenario> {
        let n = rows.len();
        Scenario::new(
            "tiny",
            FeatureMatrix::new(n, 2, vec![0.5; n * 2])?,
            CorrectnessMatrix::from_rows(rows)?,
            models,
            ExtractorProfile {
                name: "ext".into(),
                cost_mflops: 1.0,
                feature_dim: 2,
            },
            Splits::default(),
        )
    }

    fn spec(noise_rate: f64) -> SyntheticSpec {
        SyntheticSpec {
            num_samples: 300,
            num_models: 3,
            feature_dim: 4,
            costs: vec![1.0, 2.0, 3.0],
            cluster_separation: 3.0,
            noise_rate,
            seed: 11,
            extractor_mflops: 0.5,
            tier_weights: None,
        }
    }

    #[test]
    fn models_sorted_by_cost_with_original_order() {
        let models = vec![
            ModelProfile::new("resnet20", 21.83),
            ModelProfile::new("resnet8", 5.9),
            ModelProfile::new("resnet14", 13.57),
        ];
        let rows = vec![vec![1, 0, 0], vec![0, 1, 1]];
        let s = tiny(models, &rows).unwrap();
        assert_eq!(s.costs(), vec![5.9, 13.57, 21.83]);
        assert_eq!(s.original_order, vec![1, 2, 0]);
        // column 0 is now resnet8, which was column 1 on input
        assert_eq!(s.correctness.row(0), &[0, 0, 1]);
        assert_eq!(s.correctness.row(1), &[1, 1, 0]);
    }

    #[test]
    fn rejects_duplicates_and_too_few_models() {
        let rows = vec![vec![1, 0]];
        let dup = vec![ModelProfile::new("a", 1.0), ModelProfile::new("a", 2.0)];
        assert!(matches!(
            tiny(dup, &rows),
            Err(DispatchError::Validation(_))
        ));
        let one = CorrectnessMatrix::new(1, 1, vec![1]);
        assert!(matches!(one, Err(DispatchError::TooFewModels(1))));
    }

    #[test]
    fn overlapping_splits_are_a_violation() {
        let models = vec![ModelProfile::new("a", 1.0), ModelProfile::new("b", 2.0)];
        let mut s = tiny(models, &[vec![1, 1], vec![0, 1], vec![1, 0]]).unwrap();
        assert!(validate_scenario(&s).is_valid());
        s.splits = Splits {
            train: vec![0, 1],
            val: vec![],
            test: vec![1, 2],
        };
        let report = validate_scenario(&s);
        assert_eq!(
            report.violations,
            vec![Violation::SplitsNotDisjoint { index: 1 }]
        );
        assert!(report.violations[0]
            .to_string()
            .contains("splits not disjoint"));
    }

    #[test]
    fn warns_when_target_is_less_accurate_than_backbone() {
        // model a: 60% correct, backbone b: 85% correct, over 20 rows
        let rows: Vec<Vec<u8>> = (0..20)
            .map(|n| vec![u8::from(n < 12), u8::from(n < 17)])
            .collect();
        let mut b = ModelProfile::new("b", 2.0);
        b.is_extractor_backbone = true;
        let s = tiny(vec![ModelProfile::new("a", 1.0), b], &rows).unwrap();
        let report = validate_scenario(&s);
        assert!(report.is_valid());
        assert!(report.warnings.iter().any(|w| matches!(
            w,
            Warning::BelowBackboneAccuracy { model, rate, backbone_rate, .. }
                if model == "a" && (*rate - 0.6).abs() < 1e-12 && (*backbone_rate - 0.85).abs() < 1e-12
        )));
    }

    #[test]
    fn warns_on_severe_imbalance() {
        let rows: Vec<Vec<u8>> = (0..20).map(|n| vec![u8::from(n != 0), 1]).collect();
        let s = tiny(
            vec![ModelProfile::new("a", 1.0), ModelProfile::new("b", 2.0)],
            &rows,
        )
        .unwrap();
        let report = validate_scenario(&s);
        assert!(report
            .warnings
            .iter()
            .any(|w| matches!(w, Warning::SevereImbalance { class: 0, .. })));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let models = vec![ModelProfile::new("a", 1.0), ModelProfile::new("b", 2.0)];
        let rows: Vec<Vec<u8>> = (0..10).map(|_| vec![1, 1]).collect();
        let s = tiny(models, &rows).unwrap();
        let a = split_scenario(&s, (0.8, 0.1, 0.1), 3).unwrap();
        assert_eq!(
            (
                a.splits.train.len(),
                a.splits.val.len(),
                a.splits.test.len()
            ),
            (8, 1, 1)
        );
        let b = split_scenario(&s, (0.8, 0.1, 0.1), 3).unwrap();
        assert_eq!(a.splits, b.splits);
        assert!(validate_scenario(&a).is_valid());
        assert!(matches!(
            split_scenario(&s, (0.5, 0.5, 0.5), 3),
            Err(DispatchError::InvalidFractions(_))
        ));
        assert!(split_scenario(&s, (1.0, 0.0, 0.0), 3).is_err());
    }

    #[test]
    fn noiseless_synthetic_is_nested() {
        let s = generate_synthetic(&spec(0.0)).unwrap();
        for n in 0..s.num_samples() {
            let row = s.correctness.row(n);
            for k in 0..row.len() - 1 {
                assert!(row[k] <= row[k + 1], "row {n}: {row:?}");
            }
        }
    }

    #[test]
    fn synthetic_is_deterministic_in_seed() {
        let a = generate_synthetic(&spec(0.1)).unwrap();
        let b = generate_synthetic(&spec(0.1)).unwrap();
        assert_eq!(a, b);
        let mut other = spec(0.1);
        other.seed = 12;
        assert_ne!(a.features, generate_synthetic(&other).unwrap().features);
    }

    #[test]
    fn full_noise_flips_every_bit() {
        let clean = generate_synthetic(&spec(0.0)).unwrap();
        let flipped = generate_synthetic(&spec(1.0)).unwrap();
        assert_eq!(clean.features, flipped.features);
        for (a, b) in clean
            .correctness
            .values()
            .iter()
            .zip(flipped.correctness.values())
        {
            assert_eq!(*a, 1 - *b);
        }
    }

    #[test]
    fn synthetic_rejects_bad_specs() {
        let mut s = spec(0.0);
        s.costs = vec![3.0, 2.0, 1.0];
        assert!(generate_synthetic(&s).is_err());
        let mut s = spec(1.5);
        s.noise_rate = 1.5;
        assert!(generate_synthetic(&s).is_err());
    }
}
