use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::dynamics::{AsymptoticDirection, SpectralData};
use crate::gaussian_tv::tv_identity_cov;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    ExactLinearized,
    FokkerPlanck,
    Kde,
    ProfileG,
    RotatingFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub c: f64,
    pub t: f64,
    pub distance: f64,
    pub stderr: Option<f64>,
    /// Profile value at the same `c`, when one is defined.
    pub g: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileCurve {
    pub kind: CurveKind,
    pub epsilon: f64,
    /// Window exponent used by the schedule, if any.
    pub gamma: Option<f64>,
    pub points: Vec<CurvePoint>,
    /// Skipped points and other non-fatal notes.
    pub warnings: Vec<String>,
}

impl ProfileCurve {
    pub fn new(kind: CurveKind, epsilon: f64, gamma: Option<f64>) -> Self {
        Self { kind, epsilon, gamma, points: Vec::new(), warnings: Vec::new() }
    }

    /// `max_c |distance − G(c)|` over points carrying a profile value.
    pub fn max_profile_gap(&self) -> f64 {
        self.points
            .iter()
            .filter_map(|p| p.g.map(|g| (p.distance - g).abs()))
            .fold(0.0, f64::max)
    }

    pub fn distance_at(&self, c: f64) -> Option<f64> {
        self.points.iter().find(|p| (p.c - c).abs() < 1e-12).map(|p| p.distance)
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.points
            .iter()
            .map(|p| {
                format!(
                    "{},{},{},{},{},{}",
                    self.epsilon,
                    p.c,
                    p.t,
                    p.distance,
                    p.stderr.map(|s| s.to_string()).unwrap_or_default(),
                    p.g.map(|g| g.to_string()).unwrap_or_default()
                )
            })
            .collect()
    }
}

pub const CURVE_HEADER: &str = "epsilon,c,t,distance,stderr,G";

pub fn write_curves_csv(path: &Path, curves: &[ProfileCurve]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{CURVE_HEADER}")?;
    for c in curves {
        for row in c.csv_rows() {
            writeln!(w, "{row}")?;
        }
    }
    w.flush()
}

/// Default c-grid `{−3, −2.5, …, 3}`.
pub fn default_c_grid() -> Vec<f64> {
    (0..=12).map(|k| -3.0 + 0.5 * k as f64).collect()
}

/// Validates a c-grid: finite and strictly increasing.
pub fn check_c_grid(c_grid: &[f64]) -> Result<(), ExperimentError> {
    if c_grid.is_empty() || c_grid.iter().any(|c| !c.is_finite()) || c_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ExperimentError::Config("c-grid must be non-empty, finite and strictly increasing".into()));
    }
    Ok(())
}

/// `G(b) = ‖𝒢(√2 e^{−b} H^{1/2} v, I) − 𝒢(0, I)‖`.
pub fn profile_g(spectral: &SpectralData, v: &AsymptoticDirection, b: f64) -> Result<f64, ExperimentError> {
    if v.near_zero {
        return Err(ExperimentError::ExceptionalInitialCondition);
    }
    if !v.converged {
        return Err(ExperimentError::Numerical(
            "asymptotic direction did not converge; profile undefined".into(),
        ));
    }
    let root = spectral.hess0.sqrt();
    profile_from_mean(&(root * DVector::from_column_slice(&v.v)), b)
}

/// `tv_identity_cov(√2 e^{−b} m)` for a pre-whitened direction `m`.
pub(crate) fn profile_from_mean(m: &DVector<f64>, b: f64) -> Result<f64, ExperimentError> {
    let mean: Vec<f64> = m.iter().map(|x| std::f64::consts::SQRT_2 * (-b).exp() * x).collect();
    Ok(tv_identity_cov(&mean)?)
}

/// `G` sampled on `c_grid`.
pub fn profile_curve(
    spectral: &SpectralData,
    v: &AsymptoticDirection,
    c_grid: &[f64],
) -> Result<ProfileCurve, ExperimentError> {
    check_c_grid(c_grid)?;
    let mut curve = ProfileCurve::new(CurveKind::ProfileG, 0.0, None);
    for &c in c_grid {
        let g = profile_g(spectral, v, c)?;
        curve.points.push(CurvePoint { c, t: f64::NAN, distance: g, stderr: None, g: Some(g) });
    }
    Ok(curve)
}
