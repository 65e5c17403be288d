//! Aging transitions in globally coupled active/inactive Stuart–Landau
//! oscillator networks, classical and quantum.
//!
//! The numerical core is generic over [`Real`] (`f32`/`f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the CLI and all
//! quoted tolerances use.

pub mod analysis;
pub mod classical;
pub mod config;
pub mod error;
pub mod exactnet;
pub mod fockspace;
pub mod lindblad;
pub mod meanfield;
pub mod ode;
pub mod scalar;

pub use config::{NetworkConfig, Role};
pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type OperatorMatrix64 = fockspace::OperatorMatrix<f64>;
pub type DensityMatrix64 = fockspace::DensityMatrix<f64>;
pub type MasterEquation64 = lindblad::MasterEquation<f64>;
pub type NetworkConfig64 = NetworkConfig<f64>;
pub type GroupState64 = meanfield::GroupState<f64>;
pub type ClassicalState64 = classical::ClassicalState<f64>;
pub type ExactNetwork64 = exactnet::ExactNetwork<f64>;
pub type KneeResult64 = analysis::KneeResult<f64>;
pub type WignerGrid64 = analysis::WignerGrid<f64>;
