//! Finite-volume solver for `∂ₜp = ∂ₓ(V′p) + (ε/2)∂²ₓp` on a bounded
//! interval with zero-flux walls.
//!
//! Interface fluxes use the Scharfetter–Gummel (exponential fitting) form
//! with the potential difference between neighbouring centres, so the
//! discrete equilibrium is exactly `e^{−2Vᵢ/ε}` on the same grid. Time
//! stepping is Crank–Nicolson, started with four backward-Euler half steps
//! to damp the non-smooth initial datum.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Axis, DensityError, DensityGrid};
use crate::dynamics::{Drift, PotentialModel};
use crate::gaussian_tv::std_normal_interval;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpControl {
    pub cells: usize,
    /// Time step; `None` takes the largest admissible one.
    #[serde(default)]
    pub dt: Option<f64>,
}

impl Default for FpControl {
    fn default() -> Self {
        Self { cells: 2048, dt: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpSolution {
    pub times: Vec<f64>,
    pub densities: Vec<DensityGrid>,
    pub epsilon: f64,
    pub axis: Axis,
    /// Largest step used.
    pub dt: f64,
    pub steps: usize,
    /// Total mass removed by clipping negative values.
    pub clipped_mass: f64,
}

/// Interval holding `0`, `x0` and ten worst-case stationary deviations
/// `√(ε/2δ)` on either side.
pub fn fp_axis(model: &PotentialModel, epsilon: f64, x0: f64, cells: usize) -> Result<Axis, DensityError> {
    let w = 10.0 * (epsilon / (2.0 * model.declared_delta())).sqrt();
    Axis::new(x0.min(0.0) - w, x0.max(0.0) + w, cells)
}

/// `z / (eᶻ − 1)`.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

/// Tridiagonal operator `L` with `dp/dt = L p`.
struct Operator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Operator {
    fn new(potential: &[f64], epsilon: f64, dx: f64) -> Self {
        let n = potential.len();
        let d = 0.5 * epsilon / (dx * dx);
        let (mut lower, mut diag, mut upper) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n - 1 {
            let z = 2.0 * (potential[i + 1] - potential[i]) / epsilon;
            // F_{i+½}·dx⁻¹ = c_plus·p_{i+1} − c_minus·p_i
            let c_plus = d * bernoulli(-z);
            let c_minus = d * bernoulli(z);
            upper[i] += c_plus;
            diag[i] -= c_minus;
            diag[i + 1] -= c_plus;
            lower[i + 1] += c_minus;
        }
        Self { lower, diag, upper }
    }

    fn apply(&self, p: &[f64], scale: f64, out: &mut [f64]) {
        let n = p.len();
        for i in 0..n {
            let mut v = self.diag[i] * p[i];
            if i > 0 {
                v += self.lower[i] * p[i - 1];
            }
            if i + 1 < n {
                v += self.upper[i] * p[i + 1];
            }
            out[i] = p[i] + scale * v;
        }
    }
}

/// Thomas factorisation of `I − s·L`.
struct Factor {
    lower: Vec<f64>,
    inv_pivot: Vec<f64>,
    upper: Vec<f64>,
}

impl Factor {
    fn new(op: &Operator, s: f64) -> Self {
        let n = op.diag.len();
        let lower: Vec<f64> = op.lower.iter().map(|v| -s * v).collect();
        let upper: Vec<f64> = op.upper.iter().map(|v| -s * v).collect();
        let mut inv_pivot = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let b = 1.0 - s * op.diag[i];
            let piv = b - if i > 0 { lower[i] * prev_c } else { 0.0 };
            inv_pivot[i] = 1.0 / piv;
            prev_c = upper[i] * inv_pivot[i];
        }
        Self { lower, inv_pivot, upper }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper[i] * self.inv_pivot[i] * rhs[i + 1];
        }
    }
}

struct Stepper {
    op: Operator,
    cache: HashMap<(u64, bool), Factor>,
    work: Vec<f64>,
}

impl Stepper {
    /// One θ-step (θ = 1 backward Euler, θ = ½ Crank–Nicolson).
    fn step(&mut self, p: &mut [f64], h: f64, euler: bool) {
        let theta = if euler { 1.0 } else { 0.5 };
        let op = &self.op;
        let f = self
            .cache
            .entry((h.to_bits(), euler))
            .or_insert_with(|| Factor::new(op, theta * h));
        if euler {
            self.work.copy_from_slice(p);
        } else {
            op.apply(p, (1.0 - theta) * h, &mut self.work);
        }
        f.solve(&mut self.work);
        p.copy_from_slice(&self.work);
    }
}

/// Zeroes negative values (returning the mass removed) and values below
/// `1e−200`, whose subnormal descendants would slow every sweep.
fn flush(p: &mut [f64], dx: f64) -> f64 {
    let mut clipped = 0.0;
    for v in p.iter_mut() {
        if *v < 1e-200 {
            if *v < 0.0 {
                clipped -= *v * dx;
            }
            *v = 0.0;
        }
    }
    clipped
}

/// Solves from a Gaussian of one-cell standard deviation at `x0`, recording
/// at `times` (sorted, non-negative).
pub fn solve_fokker_planck_1d(
    model: &PotentialModel,
    epsilon: f64,
    x0: f64,
    times: &[f64],
    axis: Axis,
    dt: Option<f64>,
) -> Result<FpSolution, DensityError> {
    if model.dim() != 1 {
        return Err(DensityError::UnsupportedDimension(model.dim()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) || !x0.is_finite() {
        return Err(DensityError::InvalidArgument("need ε > 0 and finite x0".into()));
    }
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(DensityError::InvalidArgument("output times must be sorted and ≥ 0".into()));
    }
    if !(axis.lo < x0 && x0 < axis.hi) {
        return Err(DensityError::InvalidArgument(format!("x0 = {x0} outside the grid")));
    }
    let dx = axis.width();
    let centers = axis.centers();
    let (mut hess, mut grad) = ([0.0], [0.0]);
    let (mut max_curv, mut max_drift) = (0.0f64, 0.0f64);
    for &x in &centers {
        model.hessian_into(&[x], &mut hess);
        model.gradient_into(&[x], &mut grad);
        max_curv = max_curv.max(hess[0].abs());
        max_drift = max_drift.max(grad[0].abs());
    }
    // CN does not damp modes with h·|V'|/dx ≫ 1; clipping their undershoot adds mass.
    let limit = (0.25 * dx * dx / epsilon)
        .min(if max_curv > 0.0 { 0.1 / max_curv } else { f64::INFINITY })
        .min(if max_drift > 0.0 { dx / max_drift } else { f64::INFINITY });
    let dt = dt.unwrap_or(limit);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(DensityError::Stability { dt, limit });
    }

    let potential: Vec<f64> = centers.iter().map(|&x| model.value(&[x])).collect();
    let mut stepper = Stepper {
        op: Operator::new(&potential, epsilon, dx),
        cache: HashMap::new(),
        work: vec![0.0; axis.cells],
    };
    let mut p: Vec<f64> = (0..axis.cells)
        .map(|i| {
            let a = (axis.lo + i as f64 * dx - x0) / dx;
            std_normal_interval(a, a + 1.0) / dx
        })
        .collect();
    let mass: f64 = p.iter().sum::<f64>() * dx;
    p.iter_mut().for_each(|v| *v /= mass);

    let mut out = Vec::with_capacity(times.len());
    let mut now = 0.0;
    let mut started = false;
    let mut steps = 0;
    let mut clipped = 0.0;
    let mut used: f64 = 0.0;
    for &t in times {
        let span = t - now;
        if span > 0.0 {
            let m = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
            let h = span / m as f64;
            used = used.max(h);
            let mut k = 0;
            if !started {
                let warm = m.min(2);
                for _ in 0..2 * warm {
                    stepper.step(&mut p, 0.5 * h, true);
                }
                k = warm;
                started = true;
            }
            for _ in k..m {
                stepper.step(&mut p, h, false);
                clipped += flush(&mut p, dx);
            }
            steps += m;
            clipped += flush(&mut p, dx);
            now = t;
        }
        out.push(DensityGrid::new(vec![axis], p.clone())?);
    }
    Ok(FpSolution {
        times: times.to_vec(),
        densities: out,
        epsilon,
        axis,
        dt: used,
        steps,
        clipped_mass: clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{gaussian_density_on, stationary_density_on, tv_between_grids};
    use crate::gaussian_tv::GaussianDist;

    fn ou_error(eps: f64, cells: usize, dt_scale: f64, t: f64) -> f64 {
        let m = PotentialModel::ou_diagonal(vec![1.0]).unwrap();
        let axis = fp_axis(&m, eps, 1.0, cells).unwrap();
        let dt = 0.25 * axis.width().powi(2) / eps * dt_scale;
        let sol = solve_fokker_planck_1d(&m, eps, 1.0, &[t], axis, Some(dt.min(0.01))).unwrap();
        let var = eps * (1.0 - (-2.0 * t).exp()) / 2.0;
        let exact = GaussianDist::scalar((-t).exp(), var).unwrap();
        tv_between_grids(&sol.densities[0], &gaussian_density_on(&[axis], &exact).unwrap()).unwrap()
    }

    #[test]
    fn ou_law_at_reference_resolution() {
        for t in [0.5, 2.0] {
            let e = ou_error(0.01, 2048, 1.0, t);
            assert!(e < 1e-3, "t={t}: {e}");
        }
    }

    #[test]
    fn refinement_halves_error() {
        let coarse = ou_error(0.01, 256, 1.0, 1.0);
        let fine = ou_error(0.01, 512, 0.5, 1.0);
        assert!(fine * 2.0 <= coarse, "{coarse} {fine}");
    }

    #[test]
    fn mass_is_conserved_and_equilibrium_reached() {
        let m = PotentialModel::quartic_1d(1.0, 1.0).unwrap();
        let eps = 0.05;
        let axis = fp_axis(&m, eps, 1.0, 512).unwrap();
        let t_end = 30.0 / m.declared_delta();
        let times: Vec<f64> = (0..=6).map(|k| k as f64 * t_end / 6.0).collect();
        let sol = solve_fokker_planck_1d(&m, eps, 1.0, &times, axis, None).unwrap();
        for d in &sol.densities {
            assert!((d.integral() - 1.0).abs() < 1e-8);
        }
        assert!(sol.clipped_mass <= 1e-10);
        let mu = stationary_density_on(&m, eps, &[axis]).unwrap();
        let last = tv_between_grids(sol.densities.last().unwrap(), &mu).unwrap();
        assert!(last < 1e-3, "{last}");
        let tvs: Vec<f64> = sol.densities.iter().map(|d| tv_between_grids(d, &mu).unwrap()).collect();
        assert!(tvs.windows(2).all(|w| w[1] <= w[0] + 1e-6), "{tvs:?}");
    }

    #[test]
    fn stability_limit_is_enforced() {
        let m = PotentialModel::ou_diagonal(vec![1.0]).unwrap();
        let axis = fp_axis(&m, 0.01, 1.0, 256).unwrap();
        assert!(matches!(
            solve_fokker_planck_1d(&m, 0.01, 1.0, &[1.0], axis, Some(1.0)),
            Err(DensityError::Stability { .. })
        ));
    }

    #[test]
    fn bernoulli_symmetry() {
        for z in [-50.0, -1.0, -1e-9, 0.0, 1e-9, 0.3, 40.0] {
            assert!((bernoulli(-z) - bernoulli(z) - z).abs() < 1e-12 * (1.0 + z.abs()));
        }
        assert_eq!(bernoulli(800.0), 0.0);
    }
}
