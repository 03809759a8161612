//! Deterministic side: potentials and coercive fields, the semiflow `ψ(t)`,
//! spectral data at the origin, the asymptotic direction `v(x₀)` and the
//! covariance (Lyapunov) equations of the linearized process.

mod coercivity;
mod lyapunov;
mod model;
mod ode;
mod rotating;
mod spectral;
mod truncation;

use thiserror::Error;

use crate::gaussian_tv::GaussianError;

pub use coercivity::{check_coercivity, CoercivityReport, Counterexample, SampleSpec, Violation};
pub use lyapunov::{integrate_lyapunov, lyapunov_at_times, LyapunovMode, LyapunovSolution};
pub use model::{
    evaluate_model, Drift, Model, ModelEval, ModelSpec, Monomial, PotentialKind, PotentialModel,
    VectorFieldModel,
};
pub use ode::{
    auto_step, integrate_semiflow, local_stiffness, semiflow_at_times, uniform_grid, SemiflowResult,
    StepControl,
};
pub use rotating::{
    rot, rotating_frame_semiflow, rotating_matrix, rotating_propagator, LinearRotating,
    RotatingFrameResult,
};
pub use spectral::{
    asymptotic_direction, spectral_at_origin, AsymptoticDirection, DirectionControl, SpectralData,
};
pub use truncation::{build_truncated_model, Truncation};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DynamicsError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("linearization at the origin is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("integration failed at step {step:e}: step-size underflow or blow-up (stiff problem)")]
    Stiffness { step: f64 },
    #[error("numerical range exceeded: {0}")]
    NumericalRange(String),
    #[error("base Hessian {hessian} below δ = {delta} at x = {x}")]
    InvalidBase { x: f64, hessian: f64, delta: f64 },
    #[error("Lyapunov solution lost symmetry ({value:e})")]
    Asymmetry { value: f64 },
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}
