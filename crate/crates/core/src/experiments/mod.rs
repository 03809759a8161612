//! Cutoff schedules, profile functions, distance curves and reproducible
//! experiment runs.

mod config;
mod curves;
mod profile;
mod schedule;
mod truncation;
mod verdict;

use thiserror::Error;

use crate::density::DensityError;
use crate::dynamics::DynamicsError;
use crate::gaussian_tv::GaussianError;
use crate::sde_sim::SimError;

pub use config::{
    run_experiment, ExperimentConfig, FileRecord, RunManifest, SeedRecord, Task, TaskRecord, TaskStatus,
};
pub use curves::{
    linearized_distance_curve, nonlinear_distance_curve, rotating_frame_curve, NonlinearMethod, RotatingCurve,
    KDE_MIN_PATHS,
};
pub use profile::{
    check_c_grid, default_c_grid, profile_curve, profile_g, write_curves_csv, CurveKind, CurvePoint, ProfileCurve,
    CURVE_HEADER,
};
pub use schedule::{cutoff_schedule, CutoffSchedule, ScheduleVariant, DEFAULT_GAMMA};
pub use truncation::{
    exit_probability_bound, stationary_truncation_tv, truncation_comparison, TruncationReport, TruncationRow,
    TRUNCATION_HEADER,
};
pub use verdict::{cutoff_verdict, Thresholds, Verdict};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExperimentError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("asymptotic direction vanishes at x0; profile undefined")]
    ExceptionalInitialCondition,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Density(#[from] DensityError),
}

impl From<std::io::Error> for ExperimentError {
    fn from(e: std::io::Error) -> Self {
        ExperimentError::Io(e.to_string())
    }
}

fn gaussian_code(e: &GaussianError) -> i32 {
    match e {
        GaussianError::IdentityViolation { .. } => 4,
        GaussianError::DimensionMismatch { .. }
        | GaussianError::InvalidSpec(_)
        | GaussianError::UnsupportedDimension { .. }
        | GaussianError::NonFinite => 2,
        _ => 3,
    }
}

fn dynamics_code(e: &DynamicsError) -> i32 {
    match e {
        DynamicsError::InvalidModel(_)
        | DynamicsError::InvalidArgument(_)
        | DynamicsError::DimensionMismatch { .. }
        | DynamicsError::NonFinite
        | DynamicsError::NotPositiveDefinite { .. }
        | DynamicsError::InvalidBase { .. } => 2,
        DynamicsError::Gaussian(g) => gaussian_code(g),
        _ => 3,
    }
}

impl ExperimentError {
    /// Process exit code: 2 configuration, 3 numerical failure, 4 invariant
    /// violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::Precondition(_) | ExperimentError::ExceptionalInitialCondition => 2,
            ExperimentError::Numerical(_) | ExperimentError::Io(_) => 3,
            ExperimentError::Invariant(_) => 4,
            ExperimentError::Gaussian(e) => gaussian_code(e),
            ExperimentError::Dynamics(e) => dynamics_code(e),
            ExperimentError::Sim(e) => match e {
                SimError::InvalidArgument(_) | SimError::StepTooLarge { .. } | SimError::Unsupported(_) => 2,
                SimError::Dynamics(d) => dynamics_code(d),
                _ => 3,
            },
            ExperimentError::Density(e) => match e {
                DensityError::UnsupportedDimension(_)
                | DensityError::InvalidArgument(_)
                | DensityError::Incompatible(_)
                | DensityError::Stability { .. } => 2,
                DensityError::Dynamics(d) => dynamics_code(d),
                _ => 3,
            },
        }
    }
}

/// SplitMix64 finaliser of `seed + (index + 1)·γ`: independent child seeds
/// for tasks and cells.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
