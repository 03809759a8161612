use nalgebra::{Cholesky, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::paths::path_rng;
use super::{simulate_paths, SimError, TimeGrid};
use crate::dynamics::{Drift, PotentialModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StationaryMethod {
    ExactGaussian,
    MetropolisAdjusted,
    LongRun,
}

/// `len` samples of dimension `dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        if self.dim == 0 { 0 } else { self.data.len() / self.dim }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// One coordinate across all samples.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.data.iter().skip(j).step_by(self.dim).copied().collect()
    }
}

const CHAINS: usize = 64;
const BURN_IN: usize = 1000;
const THIN: usize = 5;

/// Samples from `μ^ε ∝ e^{−2V/ε}`.
pub fn sample_stationary(
    model: &PotentialModel,
    epsilon: f64,
    n: usize,
    seed: u64,
    method: StationaryMethod,
) -> Result<SampleSet, SimError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(SimError::InvalidArgument("need ε > 0".into()));
    }
    let dim = model.dim();
    if n == 0 {
        return Ok(SampleSet { dim, data: Vec::new() });
    }
    match method {
        StationaryMethod::ExactGaussian => exact_gaussian(model, epsilon, n, seed),
        StationaryMethod::MetropolisAdjusted => mala(model, epsilon, n, seed),
        StationaryMethod::LongRun => {
            let zero = vec![0.0; dim];
            let t_end = 30.0 / model.declared_delta();
            let grid = TimeGrid::new(t_end, t_end, TimeGrid::auto_step(model, epsilon, &zero))?;
            let e = simulate_paths(model, epsilon, &zero, &grid, n, seed)?;
            let data = (0..n).flat_map(|p| e.state(p, 1).to_vec()).collect();
            Ok(SampleSet { dim, data })
        }
    }
}

fn exact_gaussian(model: &PotentialModel, epsilon: f64, n: usize, seed: u64) -> Result<SampleSet, SimError> {
    if !model.is_quadratic() {
        return Err(SimError::Unsupported("exact-gaussian sampling needs a quadratic model".into()));
    }
    let cov = model
        .hessian_at_origin()
        .try_inverse()
        .ok_or_else(|| SimError::InvalidArgument("singular Hessian".into()))?
        * (0.5 * epsilon);
    let l = Cholesky::new(cov)
        .ok_or_else(|| SimError::InvalidArgument("covariance is not positive definite".into()))?
        .l();
    let dim = model.dim();
    let mut rng = path_rng(seed, 0);
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        data.extend((&l * z).iter());
    }
    Ok(SampleSet { dim, data })
}

/// Metropolis-adjusted Langevin chains started at the minimiser, one ChaCha
/// stream per chain.
fn mala(model: &PotentialModel, epsilon: f64, n: usize, seed: u64) -> Result<SampleSet, SimError> {
    let dim = model.dim();
    let lam_max = model
        .hessian_at_origin()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |a, &b| a.max(b));
    // Target U = 2V/ε; step τ with τ·λ_max(∇²U(0)) = 1/2.
    let tau = 0.25 * epsilon / lam_max.max(f64::MIN_POSITIVE);
    let chains = CHAINS.min(n);
    let per = n.div_ceil(chains);
    let u = |x: &[f64]| 2.0 * model.value(x) / epsilon;
    let grad_u = |x: &[f64], g: &mut [f64]| {
        model.gradient_into(x, g);
        g.iter_mut().for_each(|v| *v *= 2.0 / epsilon);
    };
    let results: Vec<(Vec<f64>, usize, usize)> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = path_rng(seed, c as u64);
            let mut x = vec![0.0; dim];
            let mut gx = vec![0.0; dim];
            grad_u(&x, &mut gx);
            let mut ux = u(&x);
            let mut y = vec![0.0; dim];
            let mut gy = vec![0.0; dim];
            let mut out = Vec::with_capacity(per * dim);
            let (mut accepted, mut proposed) = (0, 0);
            let total = BURN_IN + per * THIN;
            for step in 0..total {
                for i in 0..dim {
                    let z: f64 = rng.sample(StandardNormal);
                    y[i] = x[i] - tau * gx[i] + (2.0 * tau).sqrt() * z;
                }
                grad_u(&y, &mut gy);
                let uy = u(&y);
                // log q(x|y) − log q(y|x)
                let fwd: f64 = (0..dim).map(|i| (y[i] - x[i] + tau * gx[i]).powi(2)).sum();
                let bwd: f64 = (0..dim).map(|i| (x[i] - y[i] + tau * gy[i]).powi(2)).sum();
                let log_a = ux - uy + (fwd - bwd) / (4.0 * tau);
                let v: f64 = rng.random();
                proposed += 1;
                if log_a.is_finite() && v.ln() < log_a {
                    accepted += 1;
                    std::mem::swap(&mut x, &mut y);
                    std::mem::swap(&mut gx, &mut gy);
                    ux = uy;
                }
                if step >= BURN_IN && (step - BURN_IN + 1) % THIN == 0 {
                    out.extend_from_slice(&x);
                }
            }
            (out, accepted, proposed)
        })
        .collect();
    let (acc, prop) = results.iter().fold((0, 0), |(a, p), r| (a + r.1, p + r.2));
    let rate = acc as f64 / prop as f64;
    if rate < 0.1 {
        return Err(SimError::AcceptanceTooLow { rate });
    }
    let mut data: Vec<f64> = results.into_iter().flat_map(|r| r.0).collect();
    data.truncate(n * dim);
    Ok(SampleSet { dim, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cov(s: &SampleSet) -> Vec<f64> {
        let d = s.dim;
        let n = s.len() as f64;
        let mut c = vec![0.0; d * d];
        for i in 0..s.len() {
            let x = s.sample(i);
            for a in 0..d {
                for b in 0..d {
                    c[a * d + b] += x[a] * x[b] / n;
                }
            }
        }
        c
    }

    #[test]
    fn exact_gaussian_covariance() {
        let m = PotentialModel::ou_diagonal(vec![1.0, 2.0]).unwrap();
        let eps = 0.1;
        let s = sample_stationary(&m, eps, 40_000, 1, StationaryMethod::ExactGaussian).unwrap();
        let c = cov(&s);
        let expect = [eps / 2.0, 0.0, 0.0, eps / 4.0];
        for (got, want) in c.iter().zip(expect) {
            // SE of a second moment ≈ √2·σ²/√n.
            assert!((got - want).abs() < 4.0 * 1.5 * 0.05 / 200.0, "{c:?}");
        }
    }

    #[test]
    fn exact_gaussian_needs_quadratic() {
        let m = PotentialModel::quartic_1d(1.0, 1.0).unwrap();
        assert!(matches!(
            sample_stationary(&m, 0.1, 10, 1, StationaryMethod::ExactGaussian),
            Err(SimError::Unsupported(_))
        ));
    }

    #[test]
    fn empty_request() {
        let m = PotentialModel::quartic_1d(1.0, 1.0).unwrap();
        for method in [StationaryMethod::MetropolisAdjusted, StationaryMethod::LongRun] {
            assert!(sample_stationary(&m, 0.1, 0, 1, method).unwrap().is_empty());
        }
    }

    #[test]
    fn mala_and_long_run_match_ou_variance() {
        let m = PotentialModel::ou_diagonal(vec![2.0]).unwrap();
        let eps = 0.2;
        for method in [StationaryMethod::MetropolisAdjusted, StationaryMethod::LongRun] {
            let s = sample_stationary(&m, eps, 20_000, 7, method).unwrap();
            assert_eq!(s.len(), 20_000);
            let v = cov(&s)[0];
            assert!((v - 0.05).abs() < 0.003, "{method:?}: {v}");
        }
    }
}
