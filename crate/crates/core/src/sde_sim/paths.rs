use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{EnsembleKind, SimError, TimeGrid, TrajectoryEnsemble};
use crate::dynamics::Drift;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

fn validate(model: &dyn Drift, epsilon: f64, x0: &[f64], grid: &TimeGrid, n_paths: usize) -> Result<(), SimError> {
    if x0.len() != model.dim() {
        return Err(SimError::InvalidArgument(format!(
            "x0 has dimension {}, model has {}",
            x0.len(),
            model.dim()
        )));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) || x0.iter().any(|v| !v.is_finite()) {
        return Err(SimError::InvalidArgument("need finite ε ≥ 0 and finite x0".into()));
    }
    if n_paths == 0 {
        return Err(SimError::InvalidArgument("n_paths must be ≥ 1".into()));
    }
    grid.check_stability(model, x0)
}

/// Euler skeleton and its Jacobians at every simulation step.
struct Skeleton {
    states: Vec<f64>,
    jacobians: Vec<f64>,
}

fn skeleton(model: &dyn Drift, x0: &[f64], grid: &TimeGrid) -> Skeleton {
    let n = x0.len();
    let steps = (grid.n_records - 1) * grid.record_every;
    let mut states = Vec::with_capacity((steps + 1) * n);
    let mut jacobians = vec![0.0; steps * n * n];
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut f = vec![0.0; n];
    for k in 0..steps {
        model.jacobian_into(&x, &mut jacobians[k * n * n..(k + 1) * n * n]);
        model.drift_into(&x, &mut f);
        for (xi, fi) in x.iter_mut().zip(&f) {
            *xi -= grid.step * fi;
        }
        states.extend_from_slice(&x);
    }
    Skeleton { states, jacobians }
}

struct PathJob<'a> {
    model: &'a dyn Drift,
    epsilon: f64,
    x0: &'a [f64],
    grid: &'a TimeGrid,
    seed: u64,
    limit: f64,
    skeleton: Option<&'a Skeleton>,
}

impl PathJob<'_> {
    /// Runs path `p`; `xs` receives `x^ε`, `ys` receives `y^ε = ψ_h + √ε·y`.
    /// Returns `sup ‖x^ε‖` over every simulation step.
    fn run(&self, p: usize, mut xs: Option<&mut [f64]>, mut ys: Option<&mut [f64]>) -> Result<f64, SimError> {
        let n = self.x0.len();
        let h = self.grid.step;
        let sq = (self.epsilon * h).sqrt();
        let sqh = h.sqrt();
        let mut rng = path_rng(self.seed, p as u64);
        let mut x = self.x0.to_vec();
        let mut y = vec![0.0; n];
        let mut f = vec![0.0; n];
        let mut jy = vec![0.0; n];
        let mut dw = vec![0.0; n];
        let store = |buf: &mut Option<&mut [f64]>, k: usize, v: &[f64]| {
            if let Some(b) = buf {
                b[k * n..(k + 1) * n].copy_from_slice(v);
            }
        };
        store(&mut xs, 0, &x);
        store(&mut ys, 0, self.x0);
        let mut step = 0;
        let mut sup = norm(&x);
        let track = xs.is_some() || self.skeleton.is_none();
        for k in 1..self.grid.n_records {
            for _ in 0..self.grid.record_every {
                for z in dw.iter_mut() {
                    *z = rng.sample(StandardNormal);
                }
                if track {
                    self.model.drift_into(&x, &mut f);
                    for i in 0..n {
                        x[i] += -h * f[i] + sq * dw[i];
                    }
                    let r = norm(&x);
                    sup = sup.max(r);
                    if !(r <= self.limit) {
                        return Err(SimError::Divergence {
                            path: p,
                            time: (step + 1) as f64 * h,
                        });
                    }
                }
                if let Some(sk) = self.skeleton {
                    let j = &sk.jacobians[step * n * n..(step + 1) * n * n];
                    for r in 0..n {
                        jy[r] = (0..n).map(|c| j[r * n + c] * y[c]).sum();
                    }
                    for i in 0..n {
                        y[i] += -h * jy[i] + sqh * dw[i];
                    }
                }
                step += 1;
            }
            store(&mut xs, k, &x);
            if let (Some(sk), Some(b)) = (self.skeleton, ys.as_deref_mut()) {
                let psi = &sk.states[step * n..(step + 1) * n];
                let se = self.epsilon.sqrt();
                for i in 0..n {
                    b[k * n + i] = psi[i] + se * y[i];
                }
            }
        }
        Ok(sup)
    }
}

fn first_error(results: Vec<Result<f64, SimError>>) -> Result<Vec<f64>, SimError> {
    results.into_iter().collect()
}

fn simulate(
    kind: EnsembleKind,
    model: &dyn Drift,
    epsilon: f64,
    x0: &[f64],
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<TrajectoryEnsemble, SimError> {
    validate(model, epsilon, x0, grid, n_paths)?;
    let n = x0.len();
    let stride = grid.n_records * n;
    let sk = (kind != EnsembleKind::Nonlinear).then(|| skeleton(model, x0, grid));
    let job = PathJob {
        model,
        epsilon,
        x0,
        grid,
        seed,
        limit: 1e6 * norm(x0).max(1.0),
        skeleton: sk.as_ref(),
    };
    let mut paths = vec![0.0; n_paths * stride];
    let mut linear = None;
    let results: Vec<_> = match kind {
        EnsembleKind::Nonlinear => paths
            .par_chunks_mut(stride)
            .enumerate()
            .map(|(p, xs)| job.run(p, Some(xs), None))
            .collect(),
        EnsembleKind::Linearized => paths
            .par_chunks_mut(stride)
            .enumerate()
            .map(|(p, ys)| job.run(p, None, Some(ys)))
            .collect(),
        EnsembleKind::CoupledPair => {
            let mut lin = vec![0.0; n_paths * stride];
            let r = paths
                .par_chunks_mut(stride)
                .zip(lin.par_chunks_mut(stride))
                .enumerate()
                .map(|(p, (xs, ys))| job.run(p, Some(xs), Some(ys)))
                .collect();
            linear = Some(lin);
            r
        }
    };
    first_error(results)?;
    let skeleton = sk.map(|s| {
        let mut rec = Vec::with_capacity(stride);
        for k in 0..grid.n_records {
            let o = k * grid.record_every * n;
            rec.extend_from_slice(&s.states[o..o + n]);
        }
        rec
    });
    Ok(TrajectoryEnsemble {
        kind,
        times: grid.times(),
        dim: n,
        n_paths,
        epsilon,
        seed,
        step: grid.step,
        x0: x0.to_vec(),
        model_id: String::new(),
        paths,
        linear,
        skeleton,
    })
}

/// `sup_{s ≤ t_end} ‖x^ε(s)‖` over every Euler step, per path; nothing
/// else is stored. Streams match [`simulate_paths`] with the same seed.
pub fn simulate_running_sup(
    model: &dyn Drift,
    epsilon: f64,
    x0: &[f64],
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>, SimError> {
    validate(model, epsilon, x0, grid, n_paths)?;
    let job = PathJob {
        model,
        epsilon,
        x0,
        grid,
        seed,
        limit: 1e6 * norm(x0).max(1.0),
        skeleton: None,
    };
    (0..n_paths).into_par_iter().map(|p| job.run(p, None, None)).collect()
}

/// Euler–Maruyama ensemble of `dx = −F(x)dt + √ε dW`.
pub fn simulate_paths(
    model: &dyn Drift,
    epsilon: f64,
    x0: &[f64],
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<TrajectoryEnsemble, SimError> {
    simulate(EnsembleKind::Nonlinear, model, epsilon, x0, grid, n_paths, seed)
}

/// Ensemble of `y^ε = ψ_h + √ε·y` alone, with `dy = −DF(ψ)y dt + dW`.
pub fn simulate_linearized(
    model: &dyn Drift,
    epsilon: f64,
    x0: &[f64],
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<TrajectoryEnsemble, SimError> {
    simulate(EnsembleKind::Linearized, model, epsilon, x0, grid, n_paths, seed)
}

/// `x^ε` and `y^ε` driven by the same increments. `ψ_h` is the Euler
/// skeleton, so for a linear drift the two coincide up to rounding.
pub fn simulate_coupled_linearization(
    model: &dyn Drift,
    epsilon: f64,
    x0: &[f64],
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<TrajectoryEnsemble, SimError> {
    simulate(EnsembleKind::CoupledPair, model, epsilon, x0, grid, n_paths, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{semiflow_at_times, PotentialModel};
    use crate::with_workers;

    fn ou() -> PotentialModel {
        PotentialModel::ou_diagonal(vec![1.0]).unwrap()
    }

    #[test]
    fn zero_noise_follows_semiflow() {
        let m = PotentialModel::quartic_1d(1.0, 1.0).unwrap();
        let grid = TimeGrid::auto(&m, 0.0, &[1.0], 2.0, 0.1).unwrap();
        let e = simulate_paths(&m, 0.0, &[1.0], &grid, 3, 5).unwrap();
        let flow = semiflow_at_times(&m, &[1.0], &e.times, 1e-3).unwrap();
        for p in 0..3 {
            for k in 0..e.n_times() {
                assert!((e.state(p, k)[0] - flow.states[k][0]).abs() < 10.0 * grid.step);
            }
        }
    }

    #[test]
    fn ou_variance_at_one() {
        let eps = 0.01;
        let grid = TimeGrid::auto(&ou(), eps, &[1.0], 1.0, 0.5).unwrap();
        let e = simulate_paths(&ou(), eps, &[1.0], &grid, 10_000, 42).unwrap();
        let (_, var) = &e.marginal_moments()[2];
        let exact = eps * (1.0 - (-2.0f64).exp()) / 2.0;
        // SE of a sample variance of Gaussians: σ²·√(2/(N−1)).
        let se = exact * (2.0 / 9999.0f64).sqrt();
        assert!((var[0] - exact).abs() < 3.0 * se, "{} vs {exact}", var[0]);
    }

    #[test]
    fn worker_count_does_not_change_bytes() {
        let m = PotentialModel::quartic_1d(1.0, 1.0).unwrap();
        let grid = TimeGrid::auto(&m, 0.05, &[1.0], 1.0, 0.25).unwrap();
        let a = with_workers(Some(1), || simulate_coupled_linearization(&m, 0.05, &[1.0], &grid, 8, 9)).unwrap();
        let b = with_workers(Some(8), || simulate_coupled_linearization(&m, 0.05, &[1.0], &grid, 8, 9)).unwrap();
        assert_eq!(a, b);
        let c = simulate_coupled_linearization(&m, 0.05, &[1.0], &grid, 8, 10).unwrap();
        assert_ne!(a.paths, c.paths);
    }

    #[test]
    fn quadratic_pair_coincides() {
        let m = PotentialModel::ou_diagonal(vec![1.0, 3.0]).unwrap();
        let grid = TimeGrid::auto(&m, 0.1, &[1.0, -1.0], 2.0, 0.5).unwrap();
        let e = simulate_coupled_linearization(&m, 0.1, &[1.0, -1.0], &grid, 50, 1).unwrap();
        for p in 0..50 {
            for k in 0..e.n_times() {
                let y = e.linear_state(p, k).unwrap();
                for (a, b) in e.state(p, k).iter().zip(y) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_noise_linear_part_is_skeleton() {
        let m = PotentialModel::quartic_1d(1.0, 1.0).unwrap();
        let grid = TimeGrid::auto(&m, 0.0, &[1.0], 1.0, 0.1).unwrap();
        let e = simulate_coupled_linearization(&m, 0.0, &[1.0], &grid, 2, 3).unwrap();
        let sk = e.skeleton.as_ref().unwrap();
        for k in 0..e.n_times() {
            assert_eq!(e.linear_state(1, k).unwrap()[0], sk[k]);
            assert_eq!(e.state(1, k)[0], sk[k]);
        }
    }

    #[test]
    fn oversized_step_is_rejected() {
        let m = PotentialModel::ou_diagonal(vec![10.0]).unwrap();
        let grid = TimeGrid::new(1.0, 0.1, 0.01).unwrap();
        assert!(matches!(
            simulate_paths(&m, 0.1, &[1.0], &grid, 1, 0),
            Err(SimError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn running_sup_dominates_recorded_states() {
        let m = ou();
        let grid = TimeGrid::auto(&m, 0.5, &[1.0], 3.0, 0.5).unwrap();
        let e = simulate_paths(&m, 0.5, &[1.0], &grid, 20, 4).unwrap();
        let sup = simulate_running_sup(&m, 0.5, &[1.0], &grid, 20, 4).unwrap();
        for p in 0..20 {
            let rec = (0..e.n_times()).map(|k| e.state(p, k)[0].abs()).fold(0.0, f64::max);
            assert!(sup[p] >= rec);
        }
    }

    #[test]
    fn time_grid_divides_records() {
        let g = TimeGrid::new(2.0, 0.3, 0.007).unwrap();
        assert_eq!(g.n_records, 8);
        assert!(g.step <= 0.007);
        assert!((g.t_end() - 2.0).abs() < 1e-12);
    }
}
