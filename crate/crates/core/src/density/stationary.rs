use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{tv_between_grids, Axis, DensityError, DensityGrid};
use crate::dynamics::{Drift, PotentialModel};
use crate::gaussian_tv::{GaussianDist, SymPosDefMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Cells per axis; `None` gives 2048 in 1D and 256 per axis in 2D.
    #[serde(default)]
    pub cells: Option<usize>,
    /// Initial half-width in standard deviations of the Gaussian approximation.
    pub sigmas: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { cells: None, sigmas: 10.0 }
    }
}

impl GridSpec {
    pub fn cells_for(&self, dim: usize) -> usize {
        self.cells.unwrap_or(if dim == 1 { 2048 } else { 256 })
    }
}

/// `(ε/2)·H_V(0)⁻¹`.
fn gaussian_limit(model: &PotentialModel, epsilon: f64) -> Result<SymPosDefMatrix, DensityError> {
    let h = SymPosDefMatrix::new(model.hessian_at_origin()).map_err(|e| DensityError::Range(e.to_string()))?;
    SymPosDefMatrix::new(h.inverse() * (0.5 * epsilon)).map_err(|e| DensityError::Range(e.to_string()))
}

fn check(model: &PotentialModel, epsilon: f64) -> Result<(), DensityError> {
    if model.dim() > 2 {
        return Err(DensityError::UnsupportedDimension(model.dim()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(DensityError::InvalidArgument("need ε > 0".into()));
    }
    Ok(())
}

/// `e^{−2V/ε}` normalised on the given axes, with the log-normaliser kept.
pub fn stationary_density_on(
    model: &PotentialModel,
    epsilon: f64,
    axes: &[Axis],
) -> Result<DensityGrid, DensityError> {
    check(model, epsilon)?;
    if axes.len() != model.dim() {
        return Err(DensityError::Incompatible(format!("{} axes for a {}-D model", axes.len(), model.dim())));
    }
    let mut g = DensityGrid::from_fn(axes.to_vec(), |x| -2.0 * model.value(x) / epsilon)?;
    let top = g.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(DensityError::Range("potential is not finite on the grid".into()));
    }
    g.values.iter_mut().for_each(|v| *v = (*v - top).exp());
    let m = g.normalize()?;
    g.log_normalizer = Some(top + m.ln());
    Ok(g)
}

fn boundary_ratio(g: &DensityGrid) -> f64 {
    let top = g.values.iter().copied().fold(0.0, f64::max);
    let edge = match g.dim() {
        1 => g.values[0].max(g.values[g.values.len() - 1]),
        _ => {
            let (nx, ny) = (g.axes[0].cells, g.axes[1].cells);
            let mut e: f64 = 0.0;
            for i in 0..nx {
                for j in 0..ny {
                    if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                        e = e.max(g.values[i * ny + j]);
                    }
                }
            }
            e
        }
    };
    edge / top
}

/// `μ^ε` on a grid centred at the origin, widened until the boundary
/// density is below `1e−16·max`.
pub fn stationary_density(model: &PotentialModel, epsilon: f64, spec: &GridSpec) -> Result<DensityGrid, DensityError> {
    check(model, epsilon)?;
    if !(spec.sigmas >= 8.0) {
        return Err(DensityError::InvalidArgument("grid must cover at least 8 standard deviations".into()));
    }
    let cov = gaussian_limit(model, epsilon)?;
    let cells = spec.cells_for(model.dim());
    let mut widths: Vec<f64> = (0..model.dim())
        .map(|i| spec.sigmas * cov.as_matrix()[(i, i)].sqrt())
        .collect();
    for _ in 0..40 {
        let axes = widths
            .iter()
            .map(|&w| Axis::symmetric(w, cells))
            .collect::<Result<Vec<_>, _>>()?;
        let g = stationary_density_on(model, epsilon, &axes)?;
        if boundary_ratio(&g) < 1e-16 {
            return Ok(g);
        }
        widths.iter_mut().for_each(|w| *w *= 1.5);
    }
    Err(DensityError::Range("stationary density does not decay on any tried grid".into()))
}

/// Closed-form Gaussian density at the centres of `axes` (not renormalised).
pub fn gaussian_density_on(axes: &[Axis], g: &GaussianDist) -> Result<DensityGrid, DensityError> {
    if axes.len() != g.dim() {
        return Err(DensityError::Incompatible(format!("{} axes for a {}-D Gaussian", axes.len(), g.dim())));
    }
    DensityGrid::from_fn(axes.to_vec(), |x| g.pdf(x))
}

/// `TV(μ^ε, 𝒢(0, (ε/2)H_V(0)⁻¹))` on the stationary grid.
pub fn gaussian_approx_distance(model: &PotentialModel, epsilon: f64, spec: &GridSpec) -> Result<f64, DensityError> {
    let mu = stationary_density(model, epsilon, spec)?;
    let cov = gaussian_limit(model, epsilon)?;
    let g = GaussianDist::new(DVector::zeros(model.dim()), cov).map_err(|e| DensityError::Range(e.to_string()))?;
    tv_between_grids(&mu, &gaussian_density_on(&mu.axes, &g)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_truncated_model;

    #[test]
    fn quadratic_matches_gaussian_pointwise() {
        for &(alpha, eps) in &[(1.0, 0.01), (3.0, 1e-4), (0.5, 0.3)] {
            let m = PotentialModel::ou_diagonal(vec![alpha]).unwrap();
            let d = stationary_density(&m, eps, &GridSpec::default()).unwrap();
            let var = eps / (2.0 * alpha);
            let mut worst: f64 = 0.0;
            for (i, v) in d.values.iter().enumerate() {
                let x = d.axes[0].center(i);
                let exact = (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
                worst = worst.max((v - exact).abs());
            }
            assert!(worst < 1e-10, "α={alpha} ε={eps}: {worst:e}");
            assert!(gaussian_approx_distance(&m, eps, &GridSpec::default()).unwrap() < 1e-8);
        }
    }

    #[test]
    fn symmetric_potential_gives_symmetric_density() {
        let m = PotentialModel::quartic_1d(1.0, 1.0).unwrap();
        let d = stationary_density(&m, 0.01, &GridSpec::default()).unwrap();
        let n = d.values.len();
        for i in 0..n / 2 {
            assert_eq!(d.values[i], d.values[n - 1 - i]);
        }
        assert!((d.integral() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn two_dimensional_quadratic() {
        let m = PotentialModel::ou_diagonal(vec![1.0, 2.0]).unwrap();
        let d = stationary_density(&m, 0.1, &GridSpec::default()).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-12);
        assert!(gaussian_approx_distance(&m, 0.1, &GridSpec::default()).unwrap() < 1e-8);
    }

    #[test]
    fn truncated_quartic_distance_shrinks() {
        let base = PotentialModel::quartic_1d(1.0, 1.0).unwrap();
        let m = build_truncated_model(&base, 2.0).unwrap();
        let d2 = gaussian_approx_distance(&m, 1e-2, &GridSpec::default()).unwrap();
        let d4 = gaussian_approx_distance(&m, 1e-4, &GridSpec::default()).unwrap();
        assert!(d4 < d2 && d2 > 0.0, "{d2} {d4}");
    }

    #[test]
    fn boundary_is_negligible() {
        let m = PotentialModel::quartic_1d(0.01, 0.0001).unwrap();
        let d = stationary_density(&m, 5.0, &GridSpec::default()).unwrap();
        assert!(boundary_ratio(&d) < 1e-16);
    }
}
