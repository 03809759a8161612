use serde::{Deserialize, Serialize};

use super::curves::linearized_distance_curve;
use super::ExperimentError;
use crate::dynamics::{spectral_at_origin, Drift};

/// Pass/fail levels for the cutoff verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Required distance at `0.8·t_ε`.
    pub upper: f64,
    /// Allowed distance at `1.25·t_ε`.
    pub lower: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { upper: 0.9, lower: 0.1 }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(0.0 < self.lower && self.lower < self.upper && self.upper < 1.0) {
            return Err(ExperimentError::Config(format!(
                "thresholds need 0 < lower < upper < 1 (got {} / {})",
                self.lower, self.upper
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub epsilon: f64,
    pub t_eps: f64,
    pub early: f64,
    pub late: f64,
    pub pass: bool,
}

/// Linearized distance at `0.8·t_ε` and `1.25·t_ε`.
pub fn cutoff_verdict(
    model: &dyn Drift,
    epsilon: f64,
    x0: &[f64],
    thresholds: &Thresholds,
) -> Result<Verdict, ExperimentError> {
    thresholds.validate()?;
    let alpha1 = spectral_at_origin(model)?.alpha1;
    let t_eps = (1.0 / epsilon).ln() / (2.0 * alpha1);
    // t = t_ε + c/α₁ ⇒ c = (s − 1)·t_ε·α₁.
    let cs = [-0.2 * t_eps * alpha1, 0.25 * t_eps * alpha1];
    let curve = linearized_distance_curve(model, epsilon, x0, &cs)?;
    if curve.points.len() != 2 {
        return Err(ExperimentError::Numerical("verdict times not both positive".into()));
    }
    let (early, late) = (curve.points[0].distance, curve.points[1].distance);
    Ok(Verdict {
        epsilon,
        t_eps,
        early,
        late,
        pass: early >= thresholds.upper && late <= thresholds.lower,
    })
}
