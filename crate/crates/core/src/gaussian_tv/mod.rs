//! Total-variation distances between Gaussian distributions.
//!
//! Two routes are provided and kept independent of each other:
//!
//! * [`tv_identity_cov`] evaluates `‖𝒢(μ, I) − 𝒢(0, I)‖` through the
//!   one-dimensional reduction `2Φ(‖μ‖/2) − 1`;
//! * [`tv_general`] integrates `½∫|p₁ − p₂|` directly in the original
//!   coordinates, for arbitrary means and covariances in dimension ≤ 3.
//!
//! The quadrature splits every line integral at the exact crossing points of
//! the two densities (the zero set of a quadric), so the kink of `|p₁ − p₂|`
//! never sits inside a quadrature panel.

mod identities;
pub mod quadrature;
mod spd;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use identities::{verify_gaussian_identities, Identity, IdentityReport};
pub use spd::SymPosDefMatrix;

use quadrature::{adaptive, gauss_legendre};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const MAX_PANELS: usize = 400;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GaussianError {
    #[error("non-finite input")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e}, spectral radius {spectral_radius:e})")]
    NotPositiveDefinite {
        min_eigenvalue: f64,
        spectral_radius: f64,
    },
    #[error("dimension {dim} is not supported by the {scheme} scheme")]
    UnsupportedDimension { dim: usize, scheme: &'static str },
    #[error("quadrature did not reach tolerance {requested:e} (achieved {achieved:e})")]
    Accuracy { achieved: f64, requested: f64 },
    #[error("invalid quadrature specification: {0}")]
    InvalidSpec(String),
    #[error("identity {identity} violated in case {case}: deviation {deviation:e}")]
    IdentityViolation {
        identity: &'static str,
        case: usize,
        deviation: f64,
    },
}

/// Gaussian distribution `𝒢(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: SymPosDefMatrix,
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, cov: SymPosDefMatrix) -> Result<Self, GaussianError> {
        if mean.len() != cov.dim() {
            return Err(GaussianError::DimensionMismatch {
                expected: cov.dim(),
                found: mean.len(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(GaussianError::NonFinite);
        }
        Ok(Self { mean, cov })
    }

    /// `𝒢(mean, I)`.
    pub fn isotropic(mean: &[f64]) -> Result<Self, GaussianError> {
        Self::new(
            DVector::from_column_slice(mean),
            SymPosDefMatrix::identity(mean.len()),
        )
    }

    /// One-dimensional `𝒢(mean, variance)`.
    pub fn scalar(mean: f64, variance: f64) -> Result<Self, GaussianError> {
        Self::new(
            DVector::from_element(1, mean),
            SymPosDefMatrix::from_diagonal(&[variance])?,
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SymPosDefMatrix {
        &self.cov
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = DVector::from_column_slice(x) - &self.mean;
        let p = self.cov.inverse();
        -0.5 * (self.dim() as f64 * LN_2PI + self.cov.log_det()) - 0.5 * d.dot(&(&p * &d))
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.log_pdf(x).exp()
    }

    fn sort_key_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.mean
            .iter()
            .chain(self.cov.as_matrix().iter())
            .zip(other.mean.iter().chain(other.cov.as_matrix().iter()))
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureScheme {
    /// Composite Gauss–Legendre tensor product over the truncated box.
    TensorGrid,
    /// Nested adaptive Gauss–Kronrod with exact crossing-point splitting.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub scheme: QuadratureScheme,
    pub points_per_axis: usize,
    pub domain_radius_in_sigmas: f64,
    pub abs_tolerance: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            scheme: QuadratureScheme::Adaptive,
            points_per_axis: 64,
            domain_radius_in_sigmas: 10.0,
            abs_tolerance: 1e-10,
        }
    }
}

impl QuadratureSpec {
    pub fn tensor_grid(points_per_axis: usize, abs_tolerance: f64) -> Self {
        Self {
            scheme: QuadratureScheme::TensorGrid,
            points_per_axis,
            abs_tolerance,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), GaussianError> {
        if self.points_per_axis < 16 {
            return Err(GaussianError::InvalidSpec(format!(
                "points-per-axis must be at least 16, got {}",
                self.points_per_axis
            )));
        }
        if !(self.abs_tolerance > 0.0) {
            return Err(GaussianError::InvalidSpec("tolerance must be positive".into()));
        }
        if !(self.domain_radius_in_sigmas > 0.0) {
            return Err(GaussianError::InvalidSpec("domain radius must be positive".into()));
        }
        Ok(())
    }
}

/// Probability that a standard normal variable falls in `(a, b)`, evaluated
/// on the tail that keeps full relative precision.
pub fn std_normal_interval(a: f64, b: f64) -> f64 {
    use std::f64::consts::FRAC_1_SQRT_2;
    if a >= b {
        return 0.0;
    }
    if a >= 0.0 {
        0.5 * (libm::erfc(a * FRAC_1_SQRT_2) - libm::erfc(b * FRAC_1_SQRT_2))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b * FRAC_1_SQRT_2) - libm::erfc(-a * FRAC_1_SQRT_2))
    } else {
        1.0 - 0.5 * libm::erfc(-a * FRAC_1_SQRT_2) - 0.5 * libm::erfc(b * FRAC_1_SQRT_2)
    }
}

fn check_finite(mu: &[f64]) -> Result<(), GaussianError> {
    if mu.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GaussianError::NonFinite)
    }
}

/// `‖𝒢(μ, I_m) − 𝒢(0, I_m)‖`, equal to the one-dimensional distance at
/// mean shift `‖μ‖`: `2Φ(‖μ‖/2) − 1 = erf(‖μ‖ / 2√2)`.
pub fn tv_identity_cov(mu: &[f64]) -> Result<f64, GaussianError> {
    check_finite(mu)?;
    let r = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(libm::erf(r / (2.0 * std::f64::consts::SQRT_2)))
}

/// Coupling bound `Σ|μᵢ| / √(2π)` on `‖𝒢(μ, I) − 𝒢(0, I)‖`.
pub fn tv_mean_shift_bound(mu: &[f64]) -> Result<f64, GaussianError> {
    check_finite(mu)?;
    Ok(mu.iter().map(|v| v.abs()).sum::<f64>() / (2.0 * std::f64::consts::PI).sqrt())
}

/// Relative entropy `ℋ(g1 | g2)` between two Gaussians.
pub fn kl_divergence(g1: &GaussianDist, g2: &GaussianDist) -> Result<f64, GaussianError> {
    if g1.dim() != g2.dim() {
        return Err(GaussianError::DimensionMismatch {
            expected: g1.dim(),
            found: g2.dim(),
        });
    }
    let p2 = g2.cov.inverse();
    let d = &g2.mean - &g1.mean;
    let trace = (&p2 * g1.cov.as_matrix()).trace();
    let maha = d.dot(&(&p2 * &d));
    Ok(0.5 * (trace + maha - g1.dim() as f64 + g2.cov.log_det() - g1.cov.log_det()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PinskerReport {
    pub tv: f64,
    pub kl: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Compares the quadrature TV with the Pinsker bound `√(2·ℋ(g1|g2))`.
pub fn pinsker_check(
    g1: &GaussianDist,
    g2: &GaussianDist,
    q: &QuadratureSpec,
) -> Result<PinskerReport, GaussianError> {
    let tv = tv_general(g1, g2, q)?;
    let kl = kl_divergence(g1, g2)?;
    let bound = (2.0 * kl.max(0.0)).sqrt();
    Ok(PinskerReport {
        tv,
        kl,
        bound,
        holds: tv <= bound + 1e-9,
    })
}

/// `‖g1 − g2‖` by numerical integration of `½∫|p₁ − p₂|`.
///
/// The result is bit-for-bit symmetric in its arguments. Dimensions above 3
/// are rejected by both schemes.
pub fn tv_general(
    g1: &GaussianDist,
    g2: &GaussianDist,
    q: &QuadratureSpec,
) -> Result<f64, GaussianError> {
    q.validate()?;
    if g1.dim() != g2.dim() {
        return Err(GaussianError::DimensionMismatch {
            expected: g1.dim(),
            found: g2.dim(),
        });
    }
    let dim = g1.dim();
    if dim > 3 {
        return Err(GaussianError::UnsupportedDimension {
            dim,
            scheme: match q.scheme {
                QuadratureScheme::TensorGrid => "tensor-grid",
                QuadratureScheme::Adaptive => "adaptive",
            },
        });
    }
    let (a, b) = if g1.sort_key_cmp(g2).is_gt() { (g2, g1) } else { (g1, g2) };
    let pair = Pair::new(a, b, q.domain_radius_in_sigmas);
    let value = match q.scheme {
        QuadratureScheme::Adaptive => pair.adaptive_l1(2.0 * q.abs_tolerance)?,
        QuadratureScheme::TensorGrid => pair.tensor_l1(q.points_per_axis, 2.0 * q.abs_tolerance)?,
    };
    Ok((0.5 * value).clamp(0.0, 1.0))
}

/// Quadratic polynomial `xᵀAx + bᵀx + c`.
#[derive(Debug, Clone)]
struct Quadric {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

impl Quadric {
    fn dim(&self) -> usize {
        self.b.len()
    }

    /// Coefficients in the last variable once the leading ones are fixed.
    fn restrict_last(&self, prefix: &[f64]) -> (f64, f64, f64) {
        let n = self.dim() - 1;
        let mut lin = self.b[n];
        let mut cst = self.c;
        for i in 0..n {
            lin += 2.0 * self.a[(n, i)] * prefix[i];
            cst += self.b[i] * prefix[i];
            for j in 0..n {
                cst += self.a[(i, j)] * prefix[i] * prefix[j];
            }
        }
        (self.a[(n, n)], lin, cst)
    }

    /// Quadric in the leading variables whose zero set carries the kinks of
    /// the line integrals along the last axis. Normally the discriminant of
    /// [`Self::restrict_last`]; when the last variable does not enter at all
    /// the crossing set is a cylinder and the quadric itself is projected.
    fn reduce(&self) -> Quadric {
        let n = self.dim() - 1;
        let scale = self
            .a
            .iter()
            .chain(self.b.iter())
            .fold(self.c.abs(), |m, v| m.max(v.abs()));
        let last_free = self.b[n].abs() <= 1e-14 * scale
            && (0..=n).all(|i| self.a[(n, i)].abs() <= 1e-14 * scale);
        if last_free {
            return Quadric {
                a: self.a.view((0, 0), (n, n)).into_owned(),
                b: self.b.rows(0, n).into_owned(),
                c: self.c,
            };
        }
        self.discriminant()
    }

    /// Discriminant of [`Self::restrict_last`] as a quadric in the leading
    /// variables; its zero set is where real roots appear or merge.
    fn discriminant(&self) -> Quadric {
        let n = self.dim() - 1;
        let ann = self.a[(n, n)];
        let bn = self.b[n];
        let a = DMatrix::from_fn(n, n, |i, j| {
            4.0 * self.a[(n, i)] * self.a[(n, j)] - 4.0 * ann * self.a[(i, j)]
        });
        let b = DVector::from_fn(n, |i, _| 4.0 * bn * self.a[(n, i)] - 4.0 * ann * self.b[i]);
        Quadric {
            a,
            b,
            c: bn * bn - 4.0 * ann * self.c,
        }
    }
}

/// Sorted real roots of `a t² + b t + c`.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * a * c;
    if !(disc >= 0.0) {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut roots: Vec<f64> = if q == 0.0 {
        if a != 0.0 { vec![0.0] } else { Vec::new() }
    } else {
        vec![q / a, c / q]
    };
    roots.retain(|r| r.is_finite());
    roots.sort_by(f64::total_cmp);
    roots.dedup();
    roots
}

struct DensityParams {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    log_norm: f64,
}

impl DensityParams {
    fn new(g: &GaussianDist) -> Self {
        Self {
            mean: g.mean.clone(),
            precision: g.cov.inverse(),
            log_norm: -0.5 * (g.dim() as f64 * LN_2PI + g.cov.log_det()),
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut quad = 0.0;
        for i in 0..n {
            let di = x[i] - self.mean[i];
            for j in 0..n {
                quad += di * self.precision[(i, j)] * (x[j] - self.mean[j]);
            }
        }
        self.log_norm - 0.5 * quad
    }

    /// Line through `(prefix, ·)`: the density restricted to it is
    /// `weight · φ((t − mean)·√prec) · √prec / √(2π)`-shaped; returns
    /// `(weight, conditional mean, √precision)` with `weight` the line mass.
    fn line(&self, prefix: &[f64]) -> (f64, f64, f64) {
        let n = prefix.len();
        let pnn = self.precision[(n, n)];
        let shift: f64 = (0..n)
            .map(|j| self.precision[(n, j)] * (prefix[j] - self.mean[j]))
            .sum();
        let cmean = self.mean[n] - shift / pnn;
        let mut x = prefix.to_vec();
        x.push(cmean);
        let log_peak = self.log_density(&x);
        let weight = (log_peak + 0.5 * (LN_2PI - pnn.ln())).exp();
        (weight, cmean, pnn.sqrt())
    }
}

struct Pair {
    dim: usize,
    p: [DensityParams; 2],
    /// `chain[k]` is the crossing quadric reduced to the first `k + 1` variables.
    chain: Vec<Quadric>,
    bounds: Vec<(f64, f64)>,
}

impl Pair {
    fn new(g1: &GaussianDist, g2: &GaussianDist, radius: f64) -> Self {
        let dim = g1.dim();
        let p = [DensityParams::new(g1), DensityParams::new(g2)];
        // log p1 − log p2
        let a = (&p[1].precision - &p[0].precision) * 0.5;
        let b = &p[0].precision * &p[0].mean - &p[1].precision * &p[1].mean;
        let c = -0.5 * p[0].mean.dot(&(&p[0].precision * &p[0].mean))
            + 0.5 * p[1].mean.dot(&(&p[1].precision * &p[1].mean))
            + p[0].log_norm
            - p[1].log_norm;
        let mut chain = vec![Quadric { a, b, c }];
        while chain[0].dim() > 1 {
            let next = chain[0].reduce();
            chain.insert(0, next);
        }
        let bounds = (0..dim)
            .map(|k| {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for g in [g1, g2] {
                    let s = g.cov.as_matrix()[(k, k)].sqrt();
                    lo = lo.min(g.mean[k] - radius * s);
                    hi = hi.max(g.mean[k] + radius * s);
                }
                (lo, hi)
            })
            .collect();
        Self { dim, p, chain, bounds }
    }

    /// `∫|p₁ − p₂|` along the last axis over the whole real line.
    fn line_l1(&self, prefix: &[f64]) -> f64 {
        let (qa, qb, qc) = self.chain[self.dim - 1].restrict_last(prefix);
        let roots = quadratic_roots(qa, qb, qc);
        let l0 = self.p[0].line(prefix);
        let l1 = self.p[1].line(prefix);
        let mut edges = Vec::with_capacity(roots.len() + 2);
        edges.push(f64::NEG_INFINITY);
        edges.extend(roots);
        edges.push(f64::INFINITY);
        edges
            .windows(2)
            .map(|w| {
                let m0 = l0.0 * std_normal_interval((w[0] - l0.1) * l0.2, (w[1] - l0.1) * l0.2);
                let m1 = l1.0 * std_normal_interval((w[0] - l1.1) * l1.2, (w[1] - l1.1) * l1.2);
                (m0 - m1).abs()
            })
            .sum()
    }

    fn level(&self, k: usize, prefix: &mut Vec<f64>, tol: f64, failure: &mut f64) -> f64 {
        if k + 1 == self.dim {
            return self.line_l1(prefix);
        }
        let (lo, hi) = self.bounds[k];
        let (qa, qb, qc) = self.chain[k].restrict_last(prefix);
        let breaks = quadratic_roots(qa, qb, qc);
        let inner_tol = tol / (2.0 * (hi - lo));
        let est = adaptive(
            |x| {
                prefix.push(x);
                let v = self.level(k + 1, prefix, inner_tol, failure);
                prefix.pop();
                v
            },
            lo,
            hi,
            &breaks,
            0.5 * tol,
            MAX_PANELS,
        );
        if !est.converged {
            *failure = failure.max(est.error);
        }
        est.value
    }

    fn adaptive_l1(&self, tol: f64) -> Result<f64, GaussianError> {
        let mut failure = 0.0;
        let value = self.level(0, &mut Vec::with_capacity(self.dim), tol, &mut failure);
        if failure > 0.0 {
            return Err(GaussianError::Accuracy {
                achieved: 0.5 * failure.max(tol),
                requested: 0.5 * tol,
            });
        }
        Ok(value)
    }

    fn tensor_sum(&self, points: usize) -> f64 {
        const PANEL: usize = 16;
        let panels = points.div_ceil(PANEL).max(1);
        let order = if points < PANEL { points } else { PANEL };
        let (x, w) = gauss_legendre(order);
        let axes: Vec<Vec<(f64, f64)>> = self
            .bounds
            .iter()
            .map(|&(lo, hi)| {
                let h = (hi - lo) / panels as f64;
                (0..panels)
                    .flat_map(|p| {
                        let c = lo + (p as f64 + 0.5) * h;
                        x.iter().zip(&w).map(move |(xi, wi)| (c + 0.5 * h * xi, 0.5 * h * wi))
                    })
                    .collect()
            })
            .collect();
        let mut total = 0.0;
        let mut idx = vec![0usize; self.dim];
        let mut point = vec![0.0; self.dim];
        loop {
            let mut weight = 1.0;
            for k in 0..self.dim {
                let (xk, wk) = axes[k][idx[k]];
                point[k] = xk;
                weight *= wk;
            }
            let d = self.p[0].log_density(&point).exp() - self.p[1].log_density(&point).exp();
            total += weight * d.abs();
            let mut k = self.dim;
            loop {
                if k == 0 {
                    return total;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    fn tensor_l1(&self, points: usize, tol: f64) -> Result<f64, GaussianError> {
        let fine = self.tensor_sum(points);
        let coarse = self.tensor_sum(points / 2);
        let achieved = (fine - coarse).abs();
        if achieved > tol {
            return Err(GaussianError::Accuracy {
                achieved: 0.5 * achieved,
                requested: 0.5 * tol,
            });
        }
        Ok(fine)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson on a fine grid, split at the crossing points found
    /// by bisection on the density difference. Independent of the
    /// conditional-line machinery above.
    fn tv_1d_oracle(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
        let pdf = |x: f64, m: f64, s: f64| {
            (-0.5 * ((x - m) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        };
        let f = |x: f64| pdf(x, m1, s1) - pdf(x, m2, s2);
        let lo = (m1 - 14.0 * s1).min(m2 - 14.0 * s2);
        let hi = (m1 + 14.0 * s1).max(m2 + 14.0 * s2);
        let scan = 20_000;
        let mut cuts = vec![lo];
        for i in 0..scan {
            let a = lo + (hi - lo) * i as f64 / scan as f64;
            let b = lo + (hi - lo) * (i + 1) as f64 / scan as f64;
            if f(a).signum() != f(b).signum() && f(a) != 0.0 {
                let (mut l, mut r) = (a, b);
                for _ in 0..200 {
                    let m = 0.5 * (l + r);
                    if f(m).signum() == f(l).signum() { l = m } else { r = m }
                }
                cuts.push(0.5 * (l + r));
            }
        }
        cuts.push(hi);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let n = 20_000;
            let h = (w[1] - w[0]) / n as f64;
            let mut s = f(w[0]).abs() + f(w[1]).abs();
            for i in 1..n {
                let c = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += c * f(w[0] + i as f64 * h).abs();
            }
            total += s * h / 3.0;
        }
        0.5 * total
    }

    fn q() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn oracle_values_match_frozen_constants() {
        // Frozen from the Simpson oracle above.
        assert!((tv_1d_oracle(2.0, 1.0, 0.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-10);
        assert!((tv_1d_oracle(0.0, 1.0, 0.0, 2.0) - 0.322_674_568_834_768_5).abs() < 1e-10);
        assert!((tv_1d_oracle(1.0, 1.0, 0.0, 1.0) - 0.382_924_922_548_026).abs() < 1e-10);
        assert!((tv_1d_oracle(2f64.sqrt(), 1.0, 0.0, 1.0) - 0.520_499_877_813_046_5).abs() < 1e-10);
    }

    #[test]
    fn identity_cov_examples() {
        assert_eq!(tv_identity_cov(&[0.0, 0.0]).unwrap(), 0.0);
        let v = tv_identity_cov(&[2.0, 0.0]).unwrap();
        assert!((v - 0.682_689_492_137_085_9).abs() < 1e-12);
        assert!(tv_identity_cov(&[40.0, 0.0]).unwrap() >= 1.0 - 1e-9);
        assert!(tv_identity_cov(&[f64::NAN]).is_err());
    }

    #[test]
    fn identity_cov_divergence_regime() {
        for r in [12.0, 15.0, 30.0] {
            assert!(tv_identity_cov(&[r]).unwrap() >= 1.0 - 1e-6);
        }
    }

    #[test]
    fn general_examples() {
        let g = GaussianDist::isotropic(&[0.0, 0.0]).unwrap();
        assert_eq!(tv_general(&g, &g, &q()).unwrap(), 0.0);
        let h = GaussianDist::isotropic(&[2.0, 0.0]).unwrap();
        let v = tv_general(&h, &g, &q()).unwrap();
        assert!((v - tv_identity_cov(&[2.0, 0.0]).unwrap()).abs() < 1e-8);
        let a = GaussianDist::scalar(0.0, 1.0).unwrap();
        let b = GaussianDist::scalar(0.0, 4.0).unwrap();
        assert!((tv_general(&a, &b, &q()).unwrap() - 0.322_674_568_834_768_5).abs() < 1e-9);
    }

    #[test]
    fn general_is_exactly_symmetric() {
        let a = GaussianDist::new(
            DVector::from_vec(vec![0.3, -0.2]),
            SymPosDefMatrix::new(DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.7])).unwrap(),
        )
        .unwrap();
        let b = GaussianDist::isotropic(&[0.0, 0.4]).unwrap();
        assert_eq!(
            tv_general(&a, &b, &q()).unwrap().to_bits(),
            tv_general(&b, &a, &q()).unwrap().to_bits()
        );
    }

    #[test]
    fn three_dimensional_mean_shift_matches_closed_form() {
        let g = GaussianDist::isotropic(&[0.0, 0.0, 0.0]).unwrap();
        let h = GaussianDist::isotropic(&[0.7, -0.4, 1.1]).unwrap();
        let v = tv_general(&g, &h, &q()).unwrap();
        assert!((v - tv_identity_cov(&[0.7, -0.4, 1.1]).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn unsupported_dimension_and_bad_spec() {
        let g = GaussianDist::isotropic(&[0.0; 4]).unwrap();
        assert!(matches!(
            tv_general(&g, &g, &QuadratureSpec::tensor_grid(32, 1e-6)),
            Err(GaussianError::UnsupportedDimension { dim: 4, .. })
        ));
        let s = GaussianDist::scalar(0.0, 1.0).unwrap();
        assert!(matches!(
            tv_general(&s, &s, &QuadratureSpec::tensor_grid(8, 1e-6)),
            Err(GaussianError::InvalidSpec(_))
        ));
    }

    #[test]
    fn tensor_grid_reports_accuracy_failure() {
        let a = GaussianDist::scalar(0.0, 1.0).unwrap();
        let b = GaussianDist::scalar(0.5, 1.0).unwrap();
        let coarse = QuadratureSpec::tensor_grid(16, 1e-14);
        match tv_general(&a, &b, &coarse) {
            Err(GaussianError::Accuracy { achieved, .. }) => assert!(achieved > 1e-14),
            other => panic!("expected accuracy error, got {other:?}"),
        }
        let fine = QuadratureSpec::tensor_grid(512, 1e-4);
        let v = tv_general(&a, &b, &fine).unwrap();
        assert!((v - tv_identity_cov(&[0.5]).unwrap()).abs() < 1e-4);
    }

    #[test]
    fn mean_shift_bound_examples() {
        assert_eq!(tv_mean_shift_bound(&[0.0, 0.0]).unwrap(), 0.0);
        let b = tv_mean_shift_bound(&[1.0, 1.0]).unwrap();
        assert!((b - 0.797_884_560_802_865_4).abs() < 1e-12);
        let b2 = tv_mean_shift_bound(&[2.0, 0.0]).unwrap();
        assert!(b2 >= tv_identity_cov(&[2.0, 0.0]).unwrap());
    }

    #[test]
    fn pinsker_examples() {
        let a = GaussianDist::scalar(1.0, 1.0).unwrap();
        let b = GaussianDist::scalar(0.0, 1.0).unwrap();
        let r = pinsker_check(&a, &a, &q()).unwrap();
        assert_eq!((r.tv, r.kl), (0.0, 0.0));
        assert!(r.holds);
        let r = pinsker_check(&a, &b, &q()).unwrap();
        assert!((r.kl - 0.5).abs() < 1e-14);
        assert!((r.bound - 1.0).abs() < 1e-14);
        assert!((r.tv - 0.382_924_922_548_026).abs() < 1e-9);
        assert!(r.holds);
        let c = GaussianDist::scalar(0.0, 4.0).unwrap();
        let r = pinsker_check(&c, &b, &q()).unwrap();
        assert!((r.kl - 0.5 * (4.0 - 1.0 - 4f64.ln())).abs() < 1e-14);
        assert!(r.holds);
    }

    #[test]
    fn continuity_in_mean_and_covariance() {
        let mu = [0.8, -0.3];
        let base = tv_identity_cov(&mu).unwrap();
        for k in 1..=20 {
            let step = 1.0 / k as f64;
            let v = tv_identity_cov(&[mu[0] + step, mu[1]]).unwrap();
            assert!((v - base).abs() <= step / (2.0 * std::f64::consts::PI).sqrt() + 1e-15);
        }
        let sigma = DMatrix::from_row_slice(2, 2, &[1.2, 0.4, 0.4, 0.9]);
        let g = GaussianDist::new(DVector::zeros(2), SymPosDefMatrix::new(sigma.clone()).unwrap()).unwrap();
        let mut last = f64::INFINITY;
        for k in [1.0, 4.0, 16.0, 64.0, 256.0] {
            let gk = GaussianDist::new(
                DVector::zeros(2),
                SymPosDefMatrix::new(&sigma + DMatrix::identity(2, 2) / k).unwrap(),
            )
            .unwrap();
            let v = tv_general(&gk, &g, &q()).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(last < 5e-3);
    }

    #[test]
    fn quadratic_roots_cases() {
        assert_eq!(quadratic_roots(1.0, 0.0, -4.0), vec![-2.0, 2.0]);
        assert_eq!(quadratic_roots(0.0, 2.0, -4.0), vec![2.0]);
        assert!(quadratic_roots(1.0, 0.0, 4.0).is_empty());
        assert!(quadratic_roots(0.0, 0.0, 1.0).is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn dominance_range_and_monotonicity(x in -6.0f64..6.0, y in -6.0f64..6.0, s in 1.0f64..1.5) {
                let tv = tv_identity_cov(&[x, y]).unwrap();
                prop_assert!((0.0..=1.0).contains(&tv));
                prop_assert!(tv <= tv_mean_shift_bound(&[x, y]).unwrap() + 1e-15);
                prop_assert!(tv_identity_cov(&[s * x, s * y]).unwrap() >= tv);
            }

            #[test]
            fn pinsker_holds_on_random_pairs(m in -3.0f64..3.0, v1 in 0.2f64..5.0, v2 in 0.2f64..5.0) {
                let a = GaussianDist::scalar(m, v1).unwrap();
                let b = GaussianDist::scalar(0.0, v2).unwrap();
                let r = pinsker_check(&a, &b, &QuadratureSpec::default()).unwrap();
                prop_assert!(r.holds);
            }
        }
    }
}
