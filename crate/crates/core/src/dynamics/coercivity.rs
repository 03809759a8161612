//! Sampling checks of the coercivity characterizations: Hessian (or
//! symmetric-Jacobian) bounds and monotonicity of the field.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::Drift;
use super::DynamicsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub radius: f64,
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Violation {
    /// `yᵀ DF(x) y < δ‖y‖²`
    Lower,
    /// `yᵀ DF(x) y > Δ‖y‖²`
    Upper,
    /// `⟨F(x) − F(y), x − y⟩ < δ‖x − y‖²`
    Monotonicity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub violation: Violation,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Observed ratio, to compare with the bound.
    pub ratio: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoercivityReport {
    pub samples: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub min_monotonicity: f64,
    pub counterexample: Option<Counterexample>,
}

impl CoercivityReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 1e-12 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

fn in_ball(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<f64> {
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / n as f64);
    unit(rng, n).into_iter().map(|x| x * r).collect()
}

/// Samples `x` in the ball of the given radius and unit directions `y`;
/// reports the extreme Rayleigh quotients and the first counterexample.
pub fn check_coercivity(
    model: &dyn Drift,
    spec: &SampleSpec,
    delta: f64,
    big_delta: Option<f64>,
) -> Result<CoercivityReport, DynamicsError> {
    if spec.count == 0 || !(spec.radius > 0.0) {
        return Err(DynamicsError::InvalidArgument("need count ≥ 1 and radius > 0".into()));
    }
    let n = model.dim();
    let slack = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut jac = vec![0.0; n * n];
    let (mut min_ratio, mut max_ratio, mut min_mono) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    let mut counterexample = None;
    let record = |c: Counterexample, slot: &mut Option<Counterexample>| {
        if slot.is_none() {
            *slot = Some(c);
        }
    };
    for _ in 0..spec.count {
        let x = in_ball(&mut rng, n, spec.radius);
        let y = unit(&mut rng, n);
        model.jacobian_into(&x, &mut jac);
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += y[i] * jac[i * n + j] * y[j];
            }
        }
        min_ratio = min_ratio.min(q);
        max_ratio = max_ratio.max(q);
        if q < delta * (1.0 - slack) {
            record(
                Counterexample { violation: Violation::Lower, x: x.clone(), y: y.clone(), ratio: q, bound: delta },
                &mut counterexample,
            );
        }
        if let Some(d) = big_delta {
            if q > d * (1.0 + slack) {
                record(
                    Counterexample { violation: Violation::Upper, x: x.clone(), y: y.clone(), ratio: q, bound: d },
                    &mut counterexample,
                );
            }
        }

        let z = in_ball(&mut rng, n, spec.radius);
        let diff: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a - b).collect();
        let d2: f64 = diff.iter().map(|v| v * v).sum();
        if d2 > 1e-20 {
            let fx = model.drift(&x);
            let fz = model.drift(&z);
            let inner: f64 = fx.iter().zip(&fz).zip(&diff).map(|((a, b), d)| (a - b) * d).sum();
            let m = inner / d2;
            min_mono = min_mono.min(m);
            if m < delta * (1.0 - slack) {
                record(
                    Counterexample { violation: Violation::Monotonicity, x: x.clone(), y: z, ratio: m, bound: delta },
                    &mut counterexample,
                );
            }
        }
    }
    Ok(CoercivityReport {
        samples: spec.count,
        min_ratio,
        max_ratio,
        min_monotonicity: min_mono,
        counterexample,
    })
}
