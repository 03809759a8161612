//! Covariance ODEs of the linearized process.
//!
//! Frozen: `dΛ = −JΛ − ΛJᵀ + εI` with `J = DF(0)`.
//! Along-flow: the same with `J = DF(ψ(t))`, integrated jointly with `ψ`.
//! Both are solved for `Λ/ε`, which removes `ε` from the dynamics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::Drift;
use super::ode::{auto_step, rk4_at, uniform_grid};
use super::DynamicsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LyapunovMode {
    Frozen,
    AlongFlow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSolution {
    pub times: Vec<f64>,
    pub matrices: Vec<DMatrix<f64>>,
    pub mode: LyapunovMode,
    pub epsilon: f64,
}

impl LyapunovSolution {
    pub fn terminal(&self) -> &DMatrix<f64> {
        self.matrices.last().expect("non-empty solution")
    }
}

/// Writes `−JΛ − ΛJᵀ + I` with both products formed from the same sums, so
/// a symmetric `Λ` yields a bitwise symmetric derivative.
fn lyapunov_rhs(j: &[f64], lam: &[f64], out: &mut [f64], n: usize) {
    for r in 0..n {
        for c in r..n {
            let mut a = 0.0;
            let mut b = 0.0;
            for k in 0..n {
                a += j[r * n + k] * lam[k * n + c];
                b += j[c * n + k] * lam[k * n + r];
            }
            let v = -(a + b) + if r == c { 1.0 } else { 0.0 };
            out[r * n + c] = v;
            out[c * n + r] = v;
        }
    }
}

/// Lyapunov solution recorded at `times` (starting at 0).
///
/// `initial` is the unnormalized `Λ(0)`; zero when absent.
pub fn lyapunov_at_times(
    model: &dyn Drift,
    epsilon: f64,
    times: &[f64],
    mode: LyapunovMode,
    x0: Option<&[f64]>,
    initial: Option<&DMatrix<f64>>,
) -> Result<LyapunovSolution, DynamicsError> {
    let n = model.dim();
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(DynamicsError::InvalidArgument("ε must be positive".into()));
    }
    if times.first() != Some(&0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DynamicsError::InvalidArgument(
            "output times must start at 0 and increase strictly".into(),
        ));
    }
    let origin = vec![0.0; n];
    let x0 = match (mode, x0) {
        (LyapunovMode::AlongFlow, None) => {
            return Err(DynamicsError::InvalidArgument("along-flow mode needs x0".into()))
        }
        (_, Some(x)) if x.len() != n => {
            return Err(DynamicsError::DimensionMismatch { expected: n, found: x.len() })
        }
        (_, x) => x.unwrap_or(&origin),
    };
    let mut y0 = vec![0.0; n + n * n];
    y0[..n].copy_from_slice(x0);
    if let Some(l0) = initial {
        if l0.nrows() != n || l0.ncols() != n {
            return Err(DynamicsError::DimensionMismatch { expected: n, found: l0.nrows() });
        }
        for r in 0..n {
            for c in 0..n {
                y0[n + r * n + c] = 0.5 * (l0[(r, c)] + l0[(c, r)]) / epsilon;
            }
        }
    }
    let h = auto_step(model, x0);
    let mut jac = vec![0.0; n * n];
    model.jacobian_into(&origin, &mut jac);
    let frozen = jac.clone();
    let raw = rk4_at(
        |y, out| {
            let (psi, lam) = y.split_at(n);
            let (dpsi, dlam) = out.split_at_mut(n);
            match mode {
                LyapunovMode::Frozen => {
                    dpsi.fill(0.0);
                    lyapunov_rhs(&frozen, lam, dlam, n);
                }
                LyapunovMode::AlongFlow => {
                    model.drift_into(psi, dpsi);
                    dpsi.iter_mut().for_each(|v| *v = -*v);
                    model.jacobian_into(psi, &mut jac);
                    lyapunov_rhs(&jac, lam, dlam, n);
                }
            }
        },
        &y0,
        times,
        h,
    );
    let mut matrices = Vec::with_capacity(raw.len());
    for y in &raw {
        let m = DMatrix::from_row_slice(n, n, &y[n..]) * epsilon;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::Stiffness { step: h });
        }
        let asym = (&m - m.transpose()).norm();
        if asym > 1e-9 * m.norm() {
            return Err(DynamicsError::Asymmetry { value: asym });
        }
        matrices.push(m);
    }
    Ok(LyapunovSolution {
        times: times.to_vec(),
        matrices,
        mode,
        epsilon,
    })
}

/// Lyapunov solution on a uniform grid over `[0, t_end]` starting from `Λ(0) = 0`.
pub fn integrate_lyapunov(
    model: &dyn Drift,
    epsilon: f64,
    t_end: f64,
    mode: LyapunovMode,
    x0: Option<&[f64]>,
    output_dt: f64,
) -> Result<LyapunovSolution, DynamicsError> {
    if !(t_end > 0.0 && output_dt > 0.0) {
        return Err(DynamicsError::InvalidArgument("t_end and output_dt must be positive".into()));
    }
    lyapunov_at_times(model, epsilon, &uniform_grid(t_end, output_dt), mode, x0, None)
}
