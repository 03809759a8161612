use serde::{Deserialize, Serialize};

use super::ExperimentError;

pub const DEFAULT_GAMMA: f64 = 1.0 / 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleVariant {
    /// Window `1/α₁`.
    Linearized,
    /// Window `1/α₁ + δ_ε` with `δ_ε = ε^γ`.
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSchedule {
    pub epsilon: f64,
    pub t_eps: f64,
    pub w_eps: f64,
    pub delta_eps: f64,
    pub gamma: f64,
    pub alpha1: f64,
    pub variant: ScheduleVariant,
}

impl CutoffSchedule {
    /// `t_ε + c·w_ε`.
    pub fn time(&self, c: f64) -> f64 {
        self.t_eps + c * self.w_eps
    }

    /// `t_ε(b) = t_ε + b/α₁`, without the window correction.
    pub fn t_eps_b(&self, b: f64) -> f64 {
        self.t_eps + b / self.alpha1
    }

    /// `t*_ε(b) = t_ε(b) + b·δ_ε`.
    pub fn t_star(&self, b: f64) -> f64 {
        self.t_eps_b(b) + b * self.delta_eps
    }
}

/// `t_ε = ln(1/ε)/(2α₁)` and the window for the chosen variant.
pub fn cutoff_schedule(
    alpha1: f64,
    epsilon: f64,
    variant: ScheduleVariant,
    gamma: f64,
) -> Result<CutoffSchedule, ExperimentError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ExperimentError::Config(format!(
            "schedule needs 0 < ε < 1 (got {epsilon}); t_ε would be ≤ 0"
        )));
    }
    if !(gamma > 0.0 && gamma <= 0.25) {
        return Err(ExperimentError::Config(format!("γ = {gamma} outside (0, 1/4]")));
    }
    if !(alpha1 > 0.0 && alpha1.is_finite()) {
        return Err(ExperimentError::Config(format!("α₁ = {alpha1} must be positive")));
    }
    let delta_eps = epsilon.powf(gamma);
    let w_eps = match variant {
        ScheduleVariant::Linearized => 1.0 / alpha1,
        ScheduleVariant::Nonlinear => 1.0 / alpha1 + delta_eps,
    };
    Ok(CutoffSchedule {
        epsilon,
        t_eps: (1.0 / epsilon).ln() / (2.0 * alpha1),
        w_eps,
        delta_eps,
        gamma,
        alpha1,
        variant,
    })
}
