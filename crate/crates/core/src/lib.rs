//! Krein strings, the complete Bernstein functions they generate, the associated
//! Dirichlet-to-Neumann operators on periodic grids, and Monte Carlo simulation of the
//! boundary trace processes.
//!
//! The deterministic parts are generic over the scalar type through [`Real`]; the
//! aliases below fix it to `f64`. The stochastic parts work in `f64` only.

pub mod error;
pub mod krein_solver;
pub mod lattice_walk;
pub mod quadrature;
pub mod scalar;
pub mod special;
pub mod spectral_dtn;
pub mod trace_sim;
pub mod string_model;

pub use error::{Error, Result};
pub use scalar::Real;

pub type KreinString = string_model::KreinString<f64>;
pub type KreinString32 = string_model::KreinString<f32>;
pub type FundamentalState = krein_solver::FundamentalState<f64>;
pub type MuEstimate = krein_solver::MuEstimate<f64>;
pub type MuOptions = krein_solver::MuOptions<f64>;
pub type SpectralFunctionTable = krein_solver::SpectralFunctionTable<f64>;
pub type GridFunction = spectral_dtn::GridFunction<f64>;
