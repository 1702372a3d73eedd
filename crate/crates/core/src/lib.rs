//! Parametric surrogate modeling of dynamical systems.
//!
//! The crate builds data-driven surrogates in two stages. The offline stage
//! fits one kernel model of the dynamics per training parameter value: a
//! sparse dictionary of snapshot columns selected by approximate linear
//! dependence, followed by a pseudoinverse solve for the weight matrix. The
//! online stage rolls those models out to a target time, optionally compresses
//! the resulting states with a POD basis, and trains a small neural network
//! that maps parameters directly to (reduced) states at that time.
//!
//! All numerics are generic over the working scalar ([`scalar::Scalar`]);
//! `f64` is the default choice and the one the command-line tool uses.

pub mod dictionary;
pub mod error;
pub mod kernels;
pub mod lando;
pub mod neural;
pub mod pipeline;
pub mod pod;
pub mod scalar;
pub mod systems;

pub use dictionary::SparseDictionary;
pub use error::{Error, Result};
pub use kernels::KernelSpec;
pub use lando::{DynamicsMode, LandoModel, SnapshotSet, Trajectory};
pub use neural::{Activation, MlpConfig, NeuralMap};
pub use pipeline::{ErrorReport, OfflineBundle, OnlineModel, PodConfig, TrainingManifest};
pub use pod::PodBasis;
pub use scalar::Scalar;

/// Double-precision aliases for the main model types.
pub mod f64 {
    pub type LandoModel = crate::lando::LandoModel<f64>;
    pub type SnapshotSet = crate::lando::SnapshotSet<f64>;
    pub type SparseDictionary = crate::dictionary::SparseDictionary<f64>;
    pub type KernelSpec = crate::kernels::KernelSpec<f64>;
    pub type PodBasis = crate::pod::PodBasis<f64>;
    pub type NeuralMap = crate::neural::NeuralMap<f64>;
    pub type MlpConfig = crate::neural::MlpConfig<f64>;
    pub type OfflineBundle = crate::pipeline::OfflineBundle<f64>;
    pub type OnlineModel = crate::pipeline::OnlineModel<f64>;
    pub type ErrorReport = crate::pipeline::ErrorReport<f64>;
}

/// Single-precision aliases for the main model types.
pub mod f32 {
    pub type LandoModel = crate::lando::LandoModel<f32>;
    pub type SnapshotSet = crate::lando::SnapshotSet<f32>;
    pub type SparseDictionary = crate::dictionary::SparseDictionary<f32>;
    pub type KernelSpec = crate::kernels::KernelSpec<f32>;
    pub type PodBasis = crate::pod::PodBasis<f32>;
    pub type NeuralMap = crate::neural::NeuralMap<f32>;
    pub type MlpConfig = crate::neural::MlpConfig<f32>;
    pub type OfflineBundle = crate::pipeline::OfflineBundle<f32>;
    pub type OnlineModel = crate::pipeline::OnlineModel<f32>;
    pub type ErrorReport = crate::pipeline::ErrorReport<f32>;
}
