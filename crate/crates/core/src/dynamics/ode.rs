//! Fixed-step classical Runge–Kutta driver and the semiflow `ψ(t)`.

use serde::{Deserialize, Serialize};

use super::model::Drift;
use super::DynamicsError;

/// Integrates the autonomous system `y' = f(y)` with classical RK4, landing
/// exactly on every entry of `times` (which must start at 0 and increase).
/// Each output interval is split into equal steps no longer than `h_max`.
pub(crate) fn rk4_at<F>(mut f: F, y0: &[f64], times: &[f64], h_max: f64) -> Vec<Vec<f64>>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut out = Vec::with_capacity(times.len());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut t_prev = 0.0;
    for &t in times {
        let span = t - t_prev;
        if span > 0.0 {
            let steps = (span / h_max - 1e-9).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                f(&y, &mut k1);
                for i in 0..n {
                    tmp[i] = y[i] + 0.5 * h * k1[i];
                }
                f(&tmp, &mut k2);
                for i in 0..n {
                    tmp[i] = y[i] + 0.5 * h * k2[i];
                }
                f(&tmp, &mut k3);
                for i in 0..n {
                    tmp[i] = y[i] + h * k3[i];
                }
                f(&tmp, &mut k4);
                for i in 0..n {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
                }
            }
        }
        out.push(y.clone());
        t_prev = t;
    }
    out
}

/// `t_end·k/n` for `k = 0..=n`, with `n = ⌈t_end/dt⌉`.
pub fn uniform_grid(t_end: f64, dt: f64) -> Vec<f64> {
    let n = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
}

fn frobenius(m: &[f64]) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Local stiffness scale: the larger Frobenius norm of the Jacobian at `x0`
/// and at the origin.
pub fn local_stiffness(model: &dyn Drift, x0: &[f64]) -> f64 {
    let n = model.dim();
    let mut j = vec![0.0; n * n];
    model.jacobian_into(x0, &mut j);
    let a = frobenius(&j);
    model.jacobian_into(&vec![0.0; n], &mut j);
    a.max(frobenius(&j))
}

/// Default step `min(0.01, 0.1/Δ_local)`.
pub fn auto_step(model: &dyn Drift, x0: &[f64]) -> f64 {
    let s = local_stiffness(model, x0);
    if s > 0.0 { (0.1 / s).min(0.01) } else { 0.01 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControl {
    /// Initial RK4 step; `None` picks [`auto_step`].
    #[serde(default)]
    pub h: Option<f64>,
    /// Allowed discrepancy between step `h` and `h/2`, relative to `max(1, ‖x0‖)`.
    pub tol: f64,
    /// Spacing of the recorded grid.
    pub output_dt: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            h: None,
            tol: 1e-10,
            output_dt: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiflowResult {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `−F(ψ(t))` at every recorded time, used for Hermite interpolation.
    pub derivatives: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    /// RK4 step actually used.
    pub step: f64,
}

impl SemiflowResult {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("non-empty semiflow")
    }

    /// Cubic Hermite interpolation; clamps outside the recorded range.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        (0..self.dim())
            .map(|i| {
                h00 * self.states[k][i]
                    + h10 * h * self.derivatives[k][i]
                    + h01 * self.states[k + 1][i]
                    + h11 * h * self.derivatives[k + 1][i]
            })
            .collect()
    }

    /// `max_k ‖ψ(t_k)‖ / (‖x0‖ e^{−δ t_k})`; at most `1` when the decay law holds.
    pub fn decay_ratio(&self, delta: f64) -> f64 {
        let n0 = norm(&self.x0);
        self.times
            .iter()
            .zip(&self.states)
            .map(|(t, x)| norm(x) / (n0 * (-delta * t).exp()))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_x0(model: &dyn Drift, x0: &[f64]) -> Result<(), DynamicsError> {
    if x0.len() != model.dim() {
        return Err(DynamicsError::DimensionMismatch {
            expected: model.dim(),
            found: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFinite);
    }
    Ok(())
}

/// RK4 semiflow of `dx = −F(x) dt` recorded at `times` with fixed step `h`.
pub fn semiflow_at_times(
    model: &dyn Drift,
    x0: &[f64],
    times: &[f64],
    h: f64,
) -> Result<SemiflowResult, DynamicsError> {
    check_x0(model, x0)?;
    if times.first() != Some(&0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DynamicsError::InvalidArgument(
            "output times must start at 0 and increase strictly".into(),
        ));
    }
    let states = rk4_at(
        |y, out| {
            model.drift_into(y, out);
            out.iter_mut().for_each(|v| *v = -*v);
        },
        x0,
        times,
        h,
    );
    if states.iter().flatten().any(|v| !v.is_finite()) {
        return Err(DynamicsError::Stiffness { step: h });
    }
    let derivatives = states
        .iter()
        .map(|x| model.drift(x).into_iter().map(|v| -v).collect())
        .collect();
    Ok(SemiflowResult {
        times: times.to_vec(),
        states,
        derivatives,
        x0: x0.to_vec(),
        step: h,
    })
}

const MIN_STEP: f64 = 1e-7;

/// Semiflow `ψ(t)` on a uniform grid over `[0, t_end]`.
///
/// The run is repeated at half the step until the two solutions agree to
/// `ctrl.tol`; the finer one is returned.
pub fn integrate_semiflow(
    model: &dyn Drift,
    x0: &[f64],
    t_end: f64,
    ctrl: &StepControl,
) -> Result<SemiflowResult, DynamicsError> {
    check_x0(model, x0)?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(DynamicsError::InvalidArgument("t_end must be positive".into()));
    }
    if x0.iter().all(|&v| v == 0.0) {
        return Err(DynamicsError::InvalidArgument("x0 must be nonzero".into()));
    }
    if !(ctrl.output_dt > 0.0 && ctrl.tol > 0.0) {
        return Err(DynamicsError::InvalidArgument("output_dt and tol must be positive".into()));
    }
    let times = uniform_grid(t_end, ctrl.output_dt);
    let scale = norm(x0).max(1.0);
    let mut h = ctrl.h.unwrap_or_else(|| auto_step(model, x0));
    let mut coarse = semiflow_at_times(model, x0, &times, h);
    loop {
        if h < MIN_STEP {
            return Err(DynamicsError::Stiffness { step: h });
        }
        let fine = semiflow_at_times(model, x0, &times, 0.5 * h);
        if let (Ok(c), Ok(f)) = (&coarse, &fine) {
            let gap = c
                .states
                .iter()
                .zip(&f.states)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            if gap <= ctrl.tol * scale {
                return fine;
            }
        }
        h *= 0.5;
        coarse = fine;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PotentialModel;

    #[test]
    fn ou_matches_closed_form() {
        let m = PotentialModel::ou_diagonal(vec![1.0, 2.5]).unwrap();
        let x0 = [1.5, -0.7];
        let s = integrate_semiflow(&m, &x0, 10.0, &StepControl::default()).unwrap();
        assert_eq!(s.states[0], x0.to_vec());
        for (t, x) in s.times.iter().zip(&s.states) {
            assert!((x[0] - 1.5 * (-t).exp()).abs() < 1e-10);
            assert!((x[1] + 0.7 * (-2.5 * t).exp()).abs() < 1e-10);
        }
        assert!(s.decay_ratio(1.0) <= 1.0 + 1e-6);
        let mid = s.state_at(3.333);
        assert!((mid[0] - 1.5 * (-3.333f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn quartic_decays_and_matches_logistic_solution() {
        let m = PotentialModel::quartic_1d(1.0, 1.0).unwrap();
        let s = integrate_semiflow(&m, &[1.0], 10.0, &StepControl::default()).unwrap();
        let end = s.final_state()[0];
        assert!(end.abs() <= (-10.0f64).exp());
        // u = ψ² solves u' = −2u − 2u²: u = u0 e^{−2t} / (1 + u0(1 − e^{−2t}))
        let e = (-20.0f64).exp();
        assert!((end - (e / (1.0 + (1.0 - e))).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_requests() {
        let m = PotentialModel::ou_diagonal(vec![1.0]).unwrap();
        assert!(integrate_semiflow(&m, &[0.0], 1.0, &StepControl::default()).is_err());
        assert!(integrate_semiflow(&m, &[1.0], -1.0, &StepControl::default()).is_err());
        assert!(integrate_semiflow(&m, &[1.0, 2.0], 1.0, &StepControl::default()).is_err());
    }

    #[test]
    fn stiff_request_fails_loudly() {
        let m = PotentialModel::ou_diagonal(vec![1e9]).unwrap();
        let ctrl = StepControl { h: Some(1e-3), tol: 1e-12, output_dt: 0.5 };
        assert!(matches!(
            integrate_semiflow(&m, &[1.0], 1.0, &ctrl),
            Err(DynamicsError::Stiffness { .. })
        ));
    }

    #[test]
    fn grid_lands_on_end_point() {
        let g = uniform_grid(1.0, 0.3);
        assert_eq!(g.len(), 5);
        assert_eq!(*g.last().unwrap(), 1.0);
    }
}
