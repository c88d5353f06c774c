//! Probabilistic adapters for frozen vision-language embeddings.
//!
//! Each modality gets a small network that maps a deterministic embedding to
//! the parameters of a factorized generalized Gaussian. The crate covers the
//! distribution numerics ([`ggd`], [`special`]), the adapter and its manual
//! backward pass ([`adapter`]), the joint objective and training loop
//! ([`training`]), uncertainty estimation ([`uncertainty`]), retrieval
//! calibration metrics ([`retrieval`]), downstream selection procedures
//! ([`applications`]) and the on-disk formats ([`data`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, the precision every accuracy contract is
//! stated for.

pub mod adapter;
pub mod applications;
pub mod data;
pub mod error;
pub mod ggd;
pub mod retrieval;
pub mod scalar;
pub mod special;
pub mod training;
pub mod uncertainty;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type GgdParams = ggd::GgdParams<f64>;
pub type Adapter = adapter::AdapterNetwork<f64>;
pub type AdapterOutput = adapter::AdapterOutput<f64>;
pub type PairedDataset = training::PairedDataset<f64>;
pub type TrainedPair = training::TrainedPair<f64>;
pub type UncertaintyReport = uncertainty::UncertaintyReport<f64>;
pub type ModelCandidate = applications::ModelCandidate<f64>;

pub type GgdParams32 = ggd::GgdParams<f32>;
pub type Adapter32 = adapter::AdapterNetwork<f32>;
