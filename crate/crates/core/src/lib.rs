//! Input-dispatcher synthesis.
//!
//! Given several pre-trained predictors with known per-sample correctness and
//! per-inference cost, this crate analyses the ideal dispatcher, trains a
//! linear softmax dispatch head with a penalty-matrix loss, and searches
//! penalty/weighting configurations with NSGA-II for accuracy/cost trade-offs.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod head;
pub mod loss;
pub mod moea;
pub mod oracle;
pub mod scalar;
pub mod scenario;

pub use error::{DispatchError, Result};
pub use scalar::Scalar;

pub type DispatchHead = head::DispatchHead<f64>;
pub type DispatchHeadF32 = head::DispatchHead<f32>;
pub type EvalPoint = eval::EvalPoint<f64>;
pub type EvalPointF32 = eval::EvalPoint<f32>;
pub type CostModel = eval::CostModel<f64>;
pub type PenaltyMatrix = loss::PenaltyMatrix<f64>;
pub type PenaltyMatrixF32 = loss::PenaltyMatrix<f32>;
pub type LossConfig = loss::LossConfig<f64>;
pub type LossConfigF32 = loss::LossConfig<f32>;
pub type WeightingSpec = loss::WeightingSpec<f64>;
pub type IdealMetrics = oracle::IdealMetrics<f64>;
pub type TrainHistory = head::TrainHistory<f64>;
