use serde::Serialize;

use super::{EnsembleKind, SimError, TrajectoryEnsemble};
use crate::dynamics::SemiflowResult;

const MIN_PATHS: usize = 100;
const Z99: f64 = 2.5758293035489004;

/// `c_n = ∏_{j<n} (m + 2j)`, the Gaussian moment constant `E‖Z‖^{2n}` for
/// `Z ~ N(0, I_m)`.
pub fn moment_constant(m: usize, n: u32) -> f64 {
    (0..n).map(|j| (m + 2 * j as usize) as f64).product()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub t: f64,
    pub n: u32,
    pub estimate: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Mean of `‖x^ε − y^ε‖²` where `y^ε = ψ + √ε·y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub t: f64,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub epsilon: f64,
    pub dim: usize,
    pub n_paths: usize,
    pub rows: Vec<MomentRow>,
    pub residuals: Vec<ResidualRow>,
}

impl MomentReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn residual_at(&self, t: f64) -> Option<&ResidualRow> {
        self.residuals
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }
}

fn mean_se(values: impl Iterator<Item = f64>, n: usize) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Monte-Carlo estimates of `E‖x^ε(t) − ψ(t)‖^{2n}` against `c_n εⁿ tⁿ`, and
/// of the first-order residual, at every recorded time.
pub fn moment_report(
    ensemble: &TrajectoryEnsemble,
    semiflow: &SemiflowResult,
    orders: &[u32],
) -> Result<MomentReport, SimError> {
    if ensemble.kind != EnsembleKind::CoupledPair {
        return Err(SimError::InvalidArgument("moment report needs a coupled-pair ensemble".into()));
    }
    if ensemble.n_paths < MIN_PATHS {
        return Err(SimError::InsufficientSample {
            needed: MIN_PATHS,
            got: ensemble.n_paths,
        });
    }
    if let Some(&n) = orders.iter().find(|&&n| n != 1 && n != 2) {
        return Err(SimError::Unsupported(format!("moment order {n}; only 1 and 2")));
    }
    if semiflow.x0.len() != ensemble.dim {
        return Err(SimError::InvalidArgument("semiflow dimension differs from the ensemble".into()));
    }
    let eps = ensemble.epsilon;
    let np = ensemble.n_paths;
    let m = ensemble.dim;
    let mut rows = Vec::new();
    let mut residuals = Vec::new();
    for (k, &t) in ensemble.times.iter().enumerate() {
        let psi = semiflow.state_at(t);
        let sq: Vec<f64> = (0..np)
            .map(|p| {
                ensemble
                    .state(p, k)
                    .iter()
                    .zip(&psi)
                    .map(|(x, s)| (x - s) * (x - s))
                    .sum()
            })
            .collect();
        for &n in orders {
            let (estimate, stderr) = mean_se(sq.iter().map(|r| r.powi(n as i32)), np);
            let bound = moment_constant(m, n) * (eps * t).powi(n as i32);
            rows.push(MomentRow {
                t,
                n,
                estimate,
                stderr,
                ci_low: estimate - Z99 * stderr,
                ci_high: estimate + Z99 * stderr,
                bound,
                pass: estimate - 3.0 * stderr <= bound,
            });
        }
        let (estimate, stderr) = mean_se(
            (0..np).map(|p| {
                let y = ensemble.linear_state(p, k).expect("coupled pair");
                ensemble.state(p, k).iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
            }),
            np,
        );
        residuals.push(ResidualRow { t, estimate, stderr });
    }
    Ok(MomentReport {
        epsilon: eps,
        dim: m,
        n_paths: np,
        rows,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    /// Least-squares slope of `log E‖x^ε − y^ε‖²` against `log ε`.
    pub slope: f64,
    pub intercept: f64,
    /// `C` fitted at the largest ε from `estimate = C ε^{3/2} t^{5/2}`.
    pub constant: f64,
    /// Every smaller-ε estimate satisfies `estimate − 3·SE ≤ C ε^{3/2} t^{5/2}`.
    pub consistent: bool,
}

/// Fits the residual scaling from `(ε, estimate, stderr)` triples at time `t`.
pub fn fit_residual_scaling(points: &[(f64, f64, f64)], t: f64) -> Result<ScalingFit, SimError> {
    if points.len() < 2 {
        return Err(SimError::InsufficientSample { needed: 2, got: points.len() });
    }
    if points.iter().any(|&(e, r, _)| !(e > 0.0 && r > 0.0)) || !(t > 0.0) {
        return Err(SimError::InvalidArgument("scaling fit needs positive ε, estimates and t".into()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(SimError::InvalidArgument("all ε values coincide".into()));
    }
    let slope = sxy / sxx;
    let largest = points.iter().max_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
    let shape = |e: f64| e.powf(1.5) * t.powf(2.5);
    let constant = largest.1 / shape(largest.0);
    let consistent = points
        .iter()
        .all(|&(e, r, se)| r - 3.0 * se <= constant * shape(e));
    Ok(ScalingFit {
        slope,
        intercept: my - slope * mx,
        constant,
        consistent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{semiflow_at_times, PotentialModel};
    use crate::sde_sim::{simulate_coupled_linearization, TimeGrid};

    #[test]
    fn constants() {
        assert_eq!(moment_constant(1, 2), 3.0);
        assert_eq!(moment_constant(3, 1), 3.0);
        assert_eq!(moment_constant(2, 2), 8.0);
        assert_eq!(moment_constant(4, 0), 1.0);
    }

    #[test]
    fn ou_report_at_two() {
        let m = PotentialModel::ou_diagonal(vec![1.0]).unwrap();
        let eps = 0.01;
        let grid = TimeGrid::auto(&m, eps, &[1.0], 2.0, 0.5).unwrap();
        let e = simulate_coupled_linearization(&m, eps, &[1.0], &grid, 4000, 3).unwrap();
        let flow = semiflow_at_times(&m, &[1.0], &e.times, 1e-3).unwrap();
        let r = moment_report(&e, &flow, &[1, 2]).unwrap();
        assert!(r.all_pass());
        let row = r.rows.iter().find(|r| r.n == 1 && (r.t - 2.0).abs() < 1e-12).unwrap();
        let exact = eps * (1.0 - (-4.0f64).exp()) / 2.0;
        assert!((row.estimate - exact).abs() < 4.0 * row.stderr, "{row:?}");
        assert!((row.bound - 0.02).abs() < 1e-15);
        assert!(r.residual_at(2.0).unwrap().estimate < 1e-20);
    }

    #[test]
    fn small_ensembles_are_rejected() {
        let m = PotentialModel::ou_diagonal(vec![1.0]).unwrap();
        let grid = TimeGrid::auto(&m, 0.1, &[1.0], 1.0, 0.5).unwrap();
        let e = simulate_coupled_linearization(&m, 0.1, &[1.0], &grid, 99, 3).unwrap();
        let flow = semiflow_at_times(&m, &[1.0], &e.times, 1e-3).unwrap();
        assert!(matches!(
            moment_report(&e, &flow, &[1]),
            Err(SimError::InsufficientSample { needed: 100, got: 99 })
        ));
    }

    #[test]
    fn scaling_fit_recovers_exponent() {
        let pts: Vec<_> = [1e-2, 1e-3, 1e-4].iter().map(|&e: &f64| (e, 0.7 * e.powf(1.8), 0.0)).collect();
        let f = fit_residual_scaling(&pts, 2.0).unwrap();
        assert!((f.slope - 1.8).abs() < 1e-12);
        assert!(f.consistent);
        let bad: Vec<_> = [1e-2, 1e-3].iter().map(|&e: &f64| (e, e, 0.0)).collect();
        assert!(!fit_residual_scaling(&bad, 2.0).unwrap().consistent);
    }
}
