//! Spectrum of the linearization at the origin and the asymptotic direction
//! `v(x₀) = lim e^{α₁t} ψ(t)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::model::Drift;
use super::ode::{auto_step, norm, semiflow_at_times, uniform_grid};
use super::DynamicsError;
use crate::gaussian_tv::SymPosDefMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub alpha1: f64,
    /// Orthonormal basis of the `α₁`-eigenspace, one column per vector.
    pub eigvecs: DMatrix<f64>,
    pub multiplicity: usize,
    /// Full spectrum, ascending.
    pub spectrum: Vec<f64>,
    pub hess0: SymPosDefMatrix,
}

impl SpectralData {
    /// Orthogonal projector onto the `α₁`-eigenspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.eigvecs * self.eigvecs.transpose()
    }
}

/// Eigen-decomposition of `H_V(0)` (or `DF(0)`).
pub fn spectral_at_origin(model: &dyn Drift) -> Result<SpectralData, DynamicsError> {
    let n = model.dim();
    let j = model.jacobian(&vec![0.0; n]);
    let asym = (&j - j.transpose()).amax();
    if asym > 1e-10 {
        return Err(DynamicsError::InvalidModel(format!(
            "linearization at the origin is not symmetric (asymmetry {asym:e})"
        )));
    }
    let sym = (&j + j.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let alpha1 = spectrum[0];
    if !(alpha1 > 0.0) {
        return Err(DynamicsError::NotPositiveDefinite { min_eigenvalue: alpha1 });
    }
    if alpha1 < model.declared_delta() - 1e-9 {
        return Err(DynamicsError::InvalidModel(format!(
            "declared δ = {} exceeds α₁ = {alpha1}",
            model.declared_delta()
        )));
    }
    let cutoff = 1e-9 * alpha1.abs().max(1.0);
    let members: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| eig.eigenvalues[i] - alpha1 <= cutoff)
        .collect();
    let eigvecs = DMatrix::from_fn(n, members.len(), |r, c| eig.eigenvectors[(r, members[c])]);
    Ok(SpectralData {
        alpha1,
        multiplicity: members.len(),
        eigvecs,
        spectrum,
        hess0: SymPosDefMatrix::new(sym)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionControl {
    pub t_max: f64,
    pub window: f64,
    /// Convergence threshold on successive window means, relative to `‖x0‖`.
    pub tol: f64,
    /// RK4 step; `None` picks the default rule.
    #[serde(default)]
    pub h: Option<f64>,
}

impl DirectionControl {
    pub fn for_spectrum(s: &SpectralData) -> Self {
        Self {
            t_max: 40.0 / s.alpha1,
            window: 1.0 / s.alpha1,
            tol: 1e-10,
            h: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticDirection {
    pub v: Vec<f64>,
    pub converged: bool,
    /// `‖(I − P₁)v‖`, distance of `v` from the `α₁`-eigenspace.
    pub residual: f64,
    /// `‖v‖ < 1e−8·‖x0‖`: the exceptional set where the profile is undefined.
    pub near_zero: bool,
    /// Time at which convergence was declared (or `t_max`).
    pub t_used: f64,
    /// RK4 step behind the estimate.
    pub step: f64,
}

impl AsymptoticDirection {
    pub fn norm(&self) -> f64 {
        norm(&self.v)
    }
}

const SAMPLES_PER_WINDOW: usize = 32;

/// Estimates `v(x₀)` by watching `r(t) = e^{α₁t}ψ(t)` stabilise.
pub fn asymptotic_direction(
    model: &dyn Drift,
    x0: &[f64],
    spectral: &SpectralData,
    ctrl: &DirectionControl,
) -> Result<AsymptoticDirection, DynamicsError> {
    if !(ctrl.t_max > 2.0 * ctrl.window && ctrl.window > 0.0 && ctrl.tol > 0.0) {
        return Err(DynamicsError::InvalidArgument(
            "need window > 0, tol > 0 and t_max > 2·window".into(),
        ));
    }
    let a1 = spectral.alpha1;
    if a1 * ctrl.t_max > 700.0 {
        return Err(DynamicsError::NumericalRange(format!(
            "e^(α₁·t_max) = e^{} overflows; lower t_max",
            a1 * ctrl.t_max
        )));
    }
    let times = uniform_grid(ctrl.t_max, ctrl.window / SAMPLES_PER_WINDOW as f64);
    let per = {
        let dt = times[1] - times[0];
        ((ctrl.window / dt).round() as usize).max(1)
    };
    if let Some(h) = ctrl.h {
        return direction_with_step(model, x0, spectral, ctrl, &times, per, h);
    }
    // Halve the step until the estimate itself is stable to `tol`.
    let mut h = auto_step(model, x0);
    let mut coarse = direction_with_step(model, x0, spectral, ctrl, &times, per, h)?;
    loop {
        let fine = direction_with_step(model, x0, spectral, ctrl, &times, per, 0.5 * h)?;
        let gap = norm(
            &coarse.v.iter().zip(&fine.v).map(|(a, b)| a - b).collect::<Vec<_>>(),
        );
        if gap <= ctrl.tol * norm(x0) || h < 1e-5 {
            return Ok(fine);
        }
        h *= 0.5;
        coarse = fine;
    }
}

fn direction_with_step(
    model: &dyn Drift,
    x0: &[f64],
    spectral: &SpectralData,
    ctrl: &DirectionControl,
    times: &[f64],
    per: usize,
    h: f64,
) -> Result<AsymptoticDirection, DynamicsError> {
    let a1 = spectral.alpha1;
    let flow = semiflow_at_times(model, x0, times, h)?;
    let scale = norm(x0);
    let r: Vec<DVector<f64>> = flow
        .times
        .iter()
        .zip(&flow.states)
        .map(|(t, x)| DVector::from_column_slice(x) * (a1 * t).exp())
        .collect();
    let window_mean = |end: usize| -> DVector<f64> {
        let mut acc = DVector::zeros(x0.len());
        for k in (end + 1 - per)..=end {
            acc += &r[k];
        }
        acc / per as f64
    };

    let mut j = 2 * per;
    let mut hit = None;
    while j < r.len() {
        if norm(flow.states[j].as_slice()) < 1e-290 * scale.max(1.0) {
            return Err(DynamicsError::NumericalRange(
                "ψ(t) underflowed before e^(α₁t)ψ(t) settled".into(),
            ));
        }
        let gap = (window_mean(j) - window_mean(j - per)).norm();
        if gap < ctrl.tol * scale {
            hit = Some(j);
            break;
        }
        j += per;
    }
    let idx = hit.unwrap_or(r.len() - 1);
    let v = r[idx].clone();
    let residual = (&v - spectral.projector() * &v).norm();
    Ok(AsymptoticDirection {
        near_zero: v.norm() < 1e-8 * scale,
        v: v.as_slice().to_vec(),
        converged: hit.is_some(),
        residual,
        t_used: flow.times[idx],
        step: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PotentialModel;

    #[test]
    fn diagonal_spectra() {
        let s = spectral_at_origin(&PotentialModel::ou_diagonal(vec![2.0, 1.0]).unwrap()).unwrap();
        assert_eq!(s.alpha1, 1.0);
        assert_eq!(s.multiplicity, 1);
        assert!((s.eigvecs[(1, 0)].abs() - 1.0).abs() < 1e-15);
        let s = spectral_at_origin(&PotentialModel::ou_diagonal(vec![1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(s.multiplicity, 2);
        assert!((s.projector() - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn random_three_by_three_matches_characteristic_roots() {
        // Cardano/trigonometric roots of det(λI − A) as the oracle.
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.3, 0.5, -0.3, 2.0]);
        let m = PotentialModel::quadratic(SymPosDefMatrix::new(a.clone()).unwrap());
        let s = spectral_at_origin(&m).unwrap();
        let tr = a.trace();
        let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        let q = tr / 3.0;
        let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (&a - DMatrix::identity(3, 3) * q) / p;
        let phi = (b.determinant() / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
        let l_max = q + 2.0 * p * phi.cos();
        let l_min = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        assert!((s.alpha1 - l_min).abs() < 1e-10);
        assert!((s.spectrum[2] - l_max).abs() < 1e-10);
        let v = s.eigvecs.column(0);
        assert!((&a * v - v * s.alpha1).norm() < 1e-10);
    }

    #[test]
    fn linear_direction_is_projection() {
        let m = PotentialModel::ou_diagonal(vec![1.0, 2.0]).unwrap();
        let s = spectral_at_origin(&m).unwrap();
        let d = asymptotic_direction(&m, &[3.0, 5.0], &s, &DirectionControl::for_spectrum(&s)).unwrap();
        assert!(d.converged && !d.near_zero);
        assert!((d.v[0] - 3.0).abs() < 1e-8 && d.v[1].abs() < 1e-8, "{:?}", d.v);
        let z = asymptotic_direction(&m, &[0.0, 5.0], &s, &DirectionControl::for_spectrum(&s)).unwrap();
        assert!(z.near_zero);
    }

    #[test]
    fn quartic_direction_matches_logistic_limit() {
        // u = ψ² is logistic, so e^{2t}u → u0/(1+u0): v = x0/√(1+x0²).
        let m = PotentialModel::quartic_1d(1.0, 1.0).unwrap();
        let s = spectral_at_origin(&m).unwrap();
        let ctrl = DirectionControl::for_spectrum(&s);
        let d = asymptotic_direction(&m, &[1.0], &s, &ctrl).unwrap();
        assert!(d.converged);
        assert!(d.v[0] > 0.0 && d.v[0] <= 1.0);
        assert!((d.v[0] - 0.5f64.sqrt()).abs() < 1e-9);
        let halved = DirectionControl { h: Some(0.5 * d.step), ..ctrl };
        let d2 = asymptotic_direction(&m, &[1.0], &s, &halved).unwrap();
        assert!((d2.v[0] - d.v[0]).abs() <= 2.0 * ctrl.tol, "{d:?} {d2:?}");
    }

    #[test]
    fn overflow_is_reported() {
        let m = PotentialModel::ou_diagonal(vec![1.0]).unwrap();
        let s = spectral_at_origin(&m).unwrap();
        let ctrl = DirectionControl { t_max: 800.0, window: 1.0, tol: 1e-12, h: None };
        assert!(matches!(
            asymptotic_direction(&m, &[1.0], &s, &ctrl),
            Err(DynamicsError::NumericalRange(_))
        ));
    }
}
