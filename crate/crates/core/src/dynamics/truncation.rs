//! C² truncation of a one-dimensional potential outside `[−M, M]`.
//!
//! On each side the Hessian is blended towards the constant
//! `T = max(V''(M), V''(−M))` over `|x| ∈ [M, M + 1]` with the quintic
//! smoothstep `χ(s) = 6s⁵ − 15s⁴ + 10s³`, and `V_M'' = T` beyond. `V_M'` and
//! `V_M` are the matching integrals, so `V_M = V` exactly on `[−M, M]`.
//! Convex combinations of values ≥ δ stay ≥ δ, hence coercivity survives.

use super::model::{Drift, PotentialModel};
use super::DynamicsError;
use crate::gaussian_tv::quadrature::gauss_legendre;

const GL_ORDER: usize = 20;

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    base: PotentialModel,
    radius: f64,
    target: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `(W_M(M+1), W_M'(M+1))` for the positive and negative side.
    edges: [(f64, f64); 2],
}

impl Truncation {
    pub fn base(&self) -> &PotentialModel {
        &self.base
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Hessian value used beyond `M + 1`.
    pub fn target(&self) -> f64 {
        self.target
    }

    fn base_side(&self, sign: f64, u: f64) -> (f64, f64, f64) {
        let x = [sign * u];
        let mut g = [0.0];
        let mut h = [0.0];
        self.base.gradient_into(&x, &mut g);
        self.base.hessian_into(&x, &mut h);
        (self.base.value(&x), sign * g[0], h[0])
    }

    /// `(W_M, W_M')` on the blend band `u ∈ [M, M+1]` for side `sign`.
    fn blend(&self, sign: f64, u: f64) -> (f64, f64) {
        let (w, dw, _) = self.base_side(sign, u);
        let m = self.radius;
        let half = 0.5 * (u - m);
        let (mut i0, mut i1) = (0.0, 0.0);
        for (xi, wi) in self.nodes.iter().zip(&self.weights) {
            let s = m + half * (1.0 + xi);
            let excess = smoothstep(s - m) * (self.base_side(sign, s).2 - self.target);
            i0 += wi * excess;
            i1 += wi * (u - s) * excess;
        }
        (w - half * i1, dw - half * i0)
    }

    fn side(&self, x: f64) -> (f64, f64, usize) {
        if x >= 0.0 { (1.0, x, 0) } else { (-1.0, -x, 1) }
    }

    pub fn value(&self, x: f64) -> f64 {
        let (sign, u, k) = self.side(x);
        let m = self.radius;
        if u <= m {
            self.base.value(&[x])
        } else if u <= m + 1.0 {
            self.blend(sign, u).0
        } else {
            let (e0, e1) = self.edges[k];
            let d = u - m - 1.0;
            e0 + e1 * d + 0.5 * self.target * d * d
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (sign, u, k) = self.side(x);
        let m = self.radius;
        if u <= m {
            let mut g = [0.0];
            self.base.gradient_into(&[x], &mut g);
            g[0]
        } else if u <= m + 1.0 {
            sign * self.blend(sign, u).1
        } else {
            sign * (self.edges[k].1 + self.target * (u - m - 1.0))
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let (sign, u, _) = self.side(x);
        let m = self.radius;
        if u <= m {
            let mut h = [0.0];
            self.base.hessian_into(&[x], &mut h);
            h[0]
        } else if u <= m + 1.0 {
            let chi = smoothstep(u - m);
            (1.0 - chi) * self.base_side(sign, u).2 + chi * self.target
        } else {
            self.target
        }
    }
}

/// Builds `V_M`, equal to `base` on `[−M, M]` with bounded Hessian outside.
/// One-dimensional bases only.
pub fn build_truncated_model(base: &PotentialModel, radius: f64) -> Result<PotentialModel, DynamicsError> {
    if base.dim() != 1 {
        return Err(DynamicsError::InvalidModel("truncation is implemented for 1D bases".into()));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(DynamicsError::InvalidModel("truncation radius must be positive".into()));
    }
    let delta = base.declared_delta();
    let hess = |x: f64| {
        let mut h = [0.0];
        base.hessian_into(&[x], &mut h);
        h[0]
    };
    let samples = 4000;
    let reach = radius + 1.0;
    for i in 0..=samples {
        let x = -reach + 2.0 * reach * i as f64 / samples as f64;
        let h = hess(x);
        if !(h >= delta * (1.0 - 1e-12)) {
            return Err(DynamicsError::InvalidBase { x, hessian: h, delta });
        }
    }
    let (nodes, weights) = gauss_legendre(GL_ORDER);
    let mut t = Truncation {
        base: base.clone(),
        radius,
        target: hess(radius).max(hess(-radius)),
        nodes,
        weights,
        edges: [(0.0, 0.0); 2],
    };
    t.edges = [t.blend(1.0, radius + 1.0), t.blend(-1.0, radius + 1.0)];

    let big_delta = hessian_sup(&t, reach, samples);
    Ok(PotentialModel::truncated(t, delta, big_delta))
}

/// Supremum of `V_M''` by dense sampling plus golden-section refinement
/// around the best sample, with a small safety margin.
fn hessian_sup(t: &Truncation, reach: f64, samples: usize) -> f64 {
    let step = 2.0 * reach / samples as f64;
    let (mut best_x, mut best) = (0.0, t.target);
    for i in 0..=samples {
        let x = -reach + step * i as f64;
        let h = t.second_derivative(x);
        if h > best {
            best = h;
            best_x = x;
        }
    }
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (best_x - step, best_x + step);
    for _ in 0..80 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if t.second_derivative(c) > t.second_derivative(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let refined = t.second_derivative(0.5 * (a + b));
    best.max(refined) * (1.0 + 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic() -> PotentialModel {
        PotentialModel::quartic_1d(1.0, 1.0).unwrap()
    }

    #[test]
    fn identical_inside_the_ball() {
        let base = quartic();
        let tr = build_truncated_model(&base, 2.0).unwrap();
        for x in [-2.0 + 1e-9, -1.0, 0.0, 0.3, 1.0, 2.0 - 1e-9] {
            assert_eq!(tr.evaluate(&[x]).unwrap(), base.evaluate(&[x]).unwrap());
        }
    }

    #[test]
    fn constant_hessian_far_out() {
        let tr = build_truncated_model(&quartic(), 2.0).unwrap();
        let e = tr.evaluate(&[10.0]).unwrap();
        assert_eq!(e.hess[(0, 0)], 13.0);
        assert_eq!(tr.evaluate(&[-10.0]).unwrap().hess[(0, 0)], 13.0);
        assert!(tr.declared_big_delta().unwrap() >= 13.0);
    }

    #[test]
    fn seams_are_continuous() {
        let tr = build_truncated_model(&quartic(), 2.0).unwrap();
        let h = 1e-5;
        for seam in [2.0, 3.0, -2.0, -3.0] {
            for x in [seam - 3.0 * h, seam, seam + 3.0 * h] {
                let v = |y: f64| tr.value(&[y]);
                let fd1 = (v(x + h) - v(x - h)) / (2.0 * h);
                let mut g = [0.0];
                tr.gradient_into(&[x], &mut g);
                assert!((fd1 - g[0]).abs() < 1e-7 * (1.0 + g[0].abs()), "V' at {x}: {fd1} vs {}", g[0]);
                let mut gp = [0.0];
                let mut gm = [0.0];
                tr.gradient_into(&[x + h], &mut gp);
                tr.gradient_into(&[x - h], &mut gm);
                let fd2 = (gp[0] - gm[0]) / (2.0 * h);
                let mut hh = [0.0];
                tr.hessian_into(&[x], &mut hh);
                assert!((fd2 - hh[0]).abs() < 1e-6 * (1.0 + hh[0]), "V'' at {x}: {fd2} vs {}", hh[0]);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let ou2 = PotentialModel::ou_diagonal(vec![1.0, 1.0]).unwrap();
        assert!(build_truncated_model(&ou2, 2.0).is_err());
        assert!(build_truncated_model(&quartic(), 0.0).is_err());
        // Claims δ = 2 while V''(0) = 1.
        let liar = quartic().with_bounds(2.0, None).unwrap();
        assert!(matches!(
            build_truncated_model(&liar, 2.0),
            Err(DynamicsError::InvalidBase { .. })
        ));
    }
}
