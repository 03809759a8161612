use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::schedule::{cutoff_schedule, ScheduleVariant};
use super::{derive_seed, ExperimentError};
use crate::density::{stationary_density, stationary_density_on, tv_between_grids, GridSpec};
use crate::dynamics::{build_truncated_model, spectral_at_origin, Drift, PotentialModel};
use crate::sde_sim::{simulate_running_sup, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationRow {
    pub radius: f64,
    pub stationary_tv: f64,
    pub exit_probability: f64,
    pub exit_stderr: f64,
    /// `+∞` when `c_M² ≤ εt*` and the bound is vacuous.
    pub bound: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationReport {
    pub epsilon: f64,
    pub b: f64,
    pub gamma: f64,
    pub t_star: f64,
    pub n_paths: usize,
    pub rows: Vec<TruncationRow>,
}

impl TruncationReport {
    /// Rows where the empirical exit frequency exceeds the bound.
    pub fn violations(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.exit_probability > r.bound).map(|r| r.radius).collect()
    }

    pub fn write_rows(&self, w: &mut dyn Write) -> std::io::Result<()> {
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                self.epsilon, r.radius, self.t_star, r.stationary_tv, r.exit_probability, r.exit_stderr, r.bound
            )?;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "{TRUNCATION_HEADER}")?;
        self.write_rows(&mut w)?;
        w.flush()
    }
}

pub const TRUNCATION_HEADER: &str = "epsilon,M,t_star,stationary_tv,exit_probability,exit_stderr,bound";

/// `2ε²t*²/(c_M² − εt*)²` with `c_M = M − |x0|`.
pub fn exit_probability_bound(epsilon: f64, t_star: f64, radius: f64, x0_norm: f64) -> f64 {
    let c = radius - x0_norm;
    let gap = c * c - epsilon * t_star;
    if c <= 0.0 || gap <= 0.0 {
        return f64::INFINITY;
    }
    2.0 * (epsilon * t_star).powi(2) / (gap * gap)
}

/// TV between the Gibbs measures of `base` and `truncated`, on whichever
/// auto-widened stationary grid is wider.
pub fn stationary_truncation_tv(
    base: &PotentialModel,
    truncated: &PotentialModel,
    epsilon: f64,
) -> Result<f64, ExperimentError> {
    let a = stationary_density(base, epsilon, &GridSpec::default())?.axes[0];
    let c = stationary_density(truncated, epsilon, &GridSpec::default())?.axes[0];
    let axis = if c.hi - c.lo > a.hi - a.lo { c } else { a };
    Ok(tv_between_grids(
        &stationary_density_on(base, epsilon, &[axis])?,
        &stationary_density_on(truncated, epsilon, &[axis])?,
    )?)
}

/// Stationary TV between `base` and its truncation at each radius, and the
/// Monte-Carlo exit frequency of the truncated diffusion up to `t*_ε(b)`.
pub fn truncation_comparison(
    base: &PotentialModel,
    radii: &[f64],
    epsilon: f64,
    x0: f64,
    b: f64,
    gamma: f64,
    n_paths: usize,
    seed: u64,
) -> Result<TruncationReport, ExperimentError> {
    if base.dim() != 1 {
        return Err(ExperimentError::Config("truncation comparison needs a 1D base".into()));
    }
    if n_paths == 0 {
        return Err(ExperimentError::Config("need at least one path".into()));
    }
    if let Some(m) = radii.iter().find(|&&m| !(m > x0.abs())) {
        return Err(ExperimentError::Precondition(format!("radius {m} ≤ |x0| = {}", x0.abs())));
    }
    let alpha1 = spectral_at_origin(base)?.alpha1;
    let sched = cutoff_schedule(alpha1, epsilon, ScheduleVariant::Nonlinear, gamma)?;
    let t_star = sched.t_star(b);
    if !(t_star > 0.0) {
        return Err(ExperimentError::Config(format!("t* = {t_star} ≤ 0 for b = {b}")));
    }
    let mut rows = Vec::with_capacity(radii.len());
    for (i, &radius) in radii.iter().enumerate() {
        let truncated = build_truncated_model(base, radius)?;
        let tv = stationary_truncation_tv(base, &truncated, epsilon)?;

        let cell_seed = derive_seed(seed, i as u64);
        let grid = TimeGrid::auto(&truncated, epsilon, &[x0], t_star, t_star)?;
        let sups = simulate_running_sup(&truncated, epsilon, &[x0], &grid, n_paths, cell_seed)?;
        let p = sups.iter().filter(|&&s| s > radius).count() as f64 / n_paths as f64;
        rows.push(TruncationRow {
            radius,
            stationary_tv: tv,
            exit_probability: p,
            exit_stderr: (p * (1.0 - p) / n_paths as f64).sqrt(),
            bound: exit_probability_bound(epsilon, t_star, radius, x0.abs()),
            seed: cell_seed,
        });
    }
    Ok(TruncationReport { epsilon, b, gamma, t_star, n_paths, rows })
}
