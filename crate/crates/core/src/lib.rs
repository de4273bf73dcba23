//! Fourier–Hermite spectral simulator for the perturbed Vlasov–Poisson–Fokker–Planck
//! system near the Maxwellian, together with the energy and dissipation functionals
//! used to check the small-data energy inequality and exponential decay.
//!
//! The unknown `g` (with `f = μ + √μ g`) lives on the periodic box `[0, 2π)^d` and is
//! expanded in Fourier modes `k ∈ {-K..K}^d` and normalized Hermite functions
//! `ψ_m(v)`, `m ∈ [0, M]^d`. Everything downstream (dynamics, diagnostics, dense
//! oracle) works on that coefficient tensor.
//!
//! Module map:
//!
//! * [`state`] — grids, index layout, initial data, state validation.
//! * [`hermite`] — ladder operators, the Fokker–Planck operator, projections,
//!   the ν-norm quadratic form and the coercivity constant.
//! * [`field`] — Poisson solve, spectral derivatives, Sobolev weights.
//! * [`dynamics`] — right-hand side, time stepping and macroscopic residuals.
//! * [`diagnostics`] — energy, corrector and dissipation functionals, decay fits.
//! * [`oracle`] — dense per-wavevector generators for the linearized system.
//! * [`harness`] — configuration, CSV reports, checkpoints, run orchestration.

pub mod convolution;
pub mod diagnostics;
pub mod dynamics;
pub mod exec;
pub mod field;
pub mod harness;
pub mod hermite;
pub mod oracle;
pub mod state;

pub use num_complex::Complex64;

pub use diagnostics::{Diagnostics, EnergyReport};
pub use dynamics::{RhsMode, Scheme, Stepper};
pub use exec::Exec;
pub use harness::config::parse_config;
pub use hermite::{CoercivityMode, HermiteBasis, NuForm};
pub use state::{FourierGrid, Layout, SimConfig, SpectralState};

/// Unified error for callers that do not care which layer failed.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    State(#[from] state::StateError),
    #[error(transparent)]
    Hermite(#[from] hermite::HermiteError),
    #[error(transparent)]
    Field(#[from] field::FieldError),
    #[error(transparent)]
    Step(#[from] dynamics::StepError),
    #[error(transparent)]
    Diagnostics(#[from] diagnostics::DiagnosticsError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
    #[error(transparent)]
    Config(#[from] harness::config::ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] harness::checkpoint::CheckpointError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
