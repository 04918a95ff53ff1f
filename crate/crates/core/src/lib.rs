//! Blockchain-coordinated federated learning with CKKS-encrypted aggregation.

pub mod ckks;
pub mod contracts;
pub mod flcore;
pub mod ledger;
mod scalar;

pub use scalar::Scalar;

pub type ModelWeights = flcore::ModelWeights<f64>;
pub type ModelWeightsF32 = flcore::ModelWeights<f32>;
pub type DatasetShard = flcore::DatasetShard<f64>;
pub type DatasetShardF32 = flcore::DatasetShard<f32>;
pub type ClientUpdate = flcore::ClientUpdate<f64>;
pub type ClientUpdateF32 = flcore::ClientUpdate<f32>;
pub mod simnet;
