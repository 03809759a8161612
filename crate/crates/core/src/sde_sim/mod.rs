//! Monte-Carlo side: Euler–Maruyama ensembles of `x^ε`, the coupled
//! first-order process `y^ε = ψ + √ε·y`, moment statistics and samplers for
//! the stationary law.
//!
//! Path `p` draws its increments from ChaCha8 seeded with the ensemble seed
//! on stream `p`, so every path is a pure function of `(seed, p)` and the
//! result does not depend on how paths are scheduled across threads.

mod export;
mod moments;
mod paths;
mod stationary;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{local_stiffness, Drift, DynamicsError};

pub use export::{read_ensemble, write_ensemble, write_summary_csv};
pub use moments::{
    fit_residual_scaling, moment_constant, moment_report, MomentReport, MomentRow, ResidualRow,
    ScalingFit,
};
pub use paths::{
    simulate_coupled_linearization, simulate_linearized, simulate_paths, simulate_running_sup,
};
pub use stationary::{sample_stationary, SampleSet, StationaryMethod};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("step {step:e} exceeds the stability limit {limit:e}")]
    StepTooLarge { step: f64, limit: f64 },
    #[error("path {path} diverged at t = {time}")]
    Divergence { path: usize, time: f64 },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSample { needed: usize, got: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("acceptance rate {rate:.3} below 0.1; step size too large")]
    AcceptanceTooLow { rate: f64 },
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

/// Uniform simulation grid: `n_records` recorded times `k·record_every·step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub step: f64,
    pub record_every: usize,
    pub n_records: usize,
}

impl TimeGrid {
    /// Grid over `[0, t_end]` recording every `record_dt`, with the largest
    /// step `≤ h_max` that divides `record_dt`.
    pub fn new(t_end: f64, record_dt: f64, h_max: f64) -> Result<Self, SimError> {
        if !(t_end > 0.0 && record_dt > 0.0 && h_max > 0.0) {
            return Err(SimError::InvalidArgument("t_end, record_dt and h_max must be positive".into()));
        }
        let intervals = (t_end / record_dt).round().max(1.0) as usize;
        let record_dt = t_end / intervals as f64;
        let record_every = (record_dt / h_max - 1e-9).ceil().max(1.0) as usize;
        Ok(Self {
            step: record_dt / record_every as f64,
            record_every,
            n_records: intervals + 1,
        })
    }

    /// Step rule `min(0.01, 0.01/Δ_local, 0.1·√ε)`.
    pub fn auto_step(model: &dyn Drift, epsilon: f64, x0: &[f64]) -> f64 {
        let s = local_stiffness(model, x0);
        let mut h: f64 = 0.01;
        if s > 0.0 {
            h = h.min(0.01 / s);
        }
        if epsilon > 0.0 {
            h = h.min(0.1 * epsilon.sqrt());
        }
        h
    }

    pub fn auto(model: &dyn Drift, epsilon: f64, x0: &[f64], t_end: f64, record_dt: f64) -> Result<Self, SimError> {
        Self::new(t_end, record_dt, Self::auto_step(model, epsilon, x0))
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_records)
            .map(|k| (k * self.record_every) as f64 * self.step)
            .collect()
    }

    pub fn t_end(&self) -> f64 {
        ((self.n_records - 1) * self.record_every) as f64 * self.step
    }

    pub(crate) fn check_stability(&self, model: &dyn Drift, x0: &[f64]) -> Result<(), SimError> {
        let s = local_stiffness(model, x0);
        if s > 0.0 && self.step > 0.01 / s * (1.0 + 1e-12) {
            return Err(SimError::StepTooLarge {
                step: self.step,
                limit: 0.01 / s,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    Nonlinear,
    Linearized,
    CoupledPair,
}

impl EnsembleKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            EnsembleKind::Nonlinear => 0,
            EnsembleKind::Linearized => 1,
            EnsembleKind::CoupledPair => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(EnsembleKind::Nonlinear),
            1 => Some(EnsembleKind::Linearized),
            2 => Some(EnsembleKind::CoupledPair),
            _ => None,
        }
    }
}

/// Paths on the recorded grid, stored path-major: `[path][time][coord]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub kind: EnsembleKind,
    pub times: Vec<f64>,
    pub dim: usize,
    pub n_paths: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub step: f64,
    pub x0: Vec<f64>,
    pub model_id: String,
    /// `x^ε` for nonlinear and coupled ensembles, `y^ε` for linearized ones.
    pub paths: Vec<f64>,
    /// `y^ε` of a coupled pair.
    pub linear: Option<Vec<f64>>,
    /// Euler skeleton `ψ_h(t)` shared by all paths (coupled/linearized).
    pub skeleton: Option<Vec<f64>>,
}

impl TrajectoryEnsemble {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    fn offset(&self, path: usize, k: usize) -> usize {
        (path * self.n_times() + k) * self.dim
    }

    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        let o = self.offset(path, k);
        &self.paths[o..o + self.dim]
    }

    pub fn linear_state(&self, path: usize, k: usize) -> Option<&[f64]> {
        let o = self.offset(path, k);
        self.linear.as_ref().map(|l| &l[o..o + self.dim])
    }

    pub fn with_model_id(mut self, id: impl Into<String>) -> Self {
        self.model_id = id.into();
        self
    }

    /// Per-time sample mean and (unbiased) variance of each coordinate.
    pub fn marginal_moments(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        (0..self.n_times())
            .map(|k| {
                let mut mean = vec![0.0; self.dim];
                for p in 0..self.n_paths {
                    for (m, v) in mean.iter_mut().zip(self.state(p, k)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= self.n_paths as f64);
                let mut var = vec![0.0; self.dim];
                for p in 0..self.n_paths {
                    for ((s, v), m) in var.iter_mut().zip(self.state(p, k)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                let denom = (self.n_paths.max(2) - 1) as f64;
                var.iter_mut().for_each(|s| *s /= denom);
                (mean, var)
            })
            .collect()
    }
}
