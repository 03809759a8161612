//! Planar linear system `dx = −Ax dt` with `A = [[a, b], [−b, a]]`.
//!
//! `exp(−At) = e^{−at} Rot(bt)`, so the frame-corrected trajectory
//! `e^{at} Rot(−bt) ψ(t)` is constant and equal to `x0`.

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::Serialize;

use super::model::Drift;
use super::ode::{semiflow_at_times, SemiflowResult};
use super::DynamicsError;

/// Standard counter-clockwise rotation by `theta`.
pub fn rot(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Variant with sines on the diagonal. Not a rotation; kept only to report
/// how far it is from satisfying the frame identity.
fn literal_rot(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(s, c, -c, s)
}

pub fn rotating_matrix(a: f64, b: f64) -> Matrix2<f64> {
    Matrix2::new(a, b, -b, a)
}

/// `dx = −Ax` as a [`Drift`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRotating {
    pub a: f64,
    pub b: f64,
}

impl Drift for LinearRotating {
    fn dim(&self) -> usize {
        2
    }

    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.a * x[0] + self.b * x[1];
        out[1] = -self.b * x[0] + self.a * x[1];
    }

    fn jacobian_into(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[self.a, self.b, -self.b, self.a]);
    }

    fn declared_delta(&self) -> f64 {
        self.a
    }

    fn declared_big_delta(&self) -> Option<f64> {
        Some(self.a.hypot(self.b))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RotatingFrameResult {
    #[serde(skip)]
    pub semiflow: SemiflowResult,
    /// `e^{at} Rot(−bt) ψ(t)` per recorded time.
    pub corrected: Vec<[f64; 2]>,
    /// `max_t ‖e^{at} Rot(−bt) ψ(t) − x0‖`.
    pub deviation: f64,
    /// Same with the sines-on-diagonal variant.
    pub literal_deviation: f64,
}

/// Solves the rotating system on `t_grid` and checks the frame identity.
pub fn rotating_frame_semiflow(
    a: f64,
    b: f64,
    x0: [f64; 2],
    t_grid: &[f64],
) -> Result<RotatingFrameResult, DynamicsError> {
    if !(a > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(DynamicsError::InvalidModel("rotating system needs a > 0".into()));
    }
    let field = LinearRotating { a, b };
    let h = 1e-3 / a.hypot(b).max(1.0);
    let semiflow = semiflow_at_times(&field, &x0, t_grid, h)?;
    let x0v = Vector2::new(x0[0], x0[1]);
    let mut corrected = Vec::with_capacity(t_grid.len());
    let (mut deviation, mut literal_deviation) = (0.0f64, 0.0f64);
    for (t, x) in t_grid.iter().zip(&semiflow.states) {
        let psi = Vector2::new(x[0], x[1]) * (a * t).exp();
        let c = rot(-b * t) * psi;
        let l = literal_rot(-b * t) * psi;
        deviation = deviation.max((c - x0v).norm());
        literal_deviation = literal_deviation.max((l - x0v).norm());
        corrected.push([c[0], c[1]]);
    }
    Ok(RotatingFrameResult {
        semiflow,
        corrected,
        deviation,
        literal_deviation,
    })
}

/// `exp(−At)` in closed form.
pub fn rotating_propagator(a: f64, b: f64, t: f64) -> DMatrix<f64> {
    let m = rot(b * t) * (-a * t).exp();
    DMatrix::from_column_slice(2, 2, m.as_slice())
}
