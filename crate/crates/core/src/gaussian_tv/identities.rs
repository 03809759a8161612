//! Randomized numerical confirmation of the invariance identities for the
//! total variation between Gaussians. Both sides of every identity go
//! through [`tv_general`], so a bug in the quadrature would have to respect
//! each transformation exactly to go unnoticed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::{tv_general, GaussianDist, GaussianError, QuadratureSpec, SymPosDefMatrix};

const THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Identity {
    /// `‖𝒢(cμ, c²Σ) − 𝒢(cμ̃, c²Σ̃)‖ = ‖𝒢(μ, Σ) − 𝒢(μ̃, Σ̃)‖`
    Scaling,
    /// `‖𝒢(μ, Σ) − 𝒢(μ̃, Σ̃)‖ = ‖𝒢(μ − μ̃, Σ) − 𝒢(0, Σ̃)‖`
    MeanTranslation,
    /// `‖𝒢(μ, Σ) − 𝒢(μ̃, Σ)‖ = ‖𝒢(Σ^{-1/2}μ, I) − 𝒢(Σ^{-1/2}μ̃, I)‖`
    Whitening,
    /// `‖𝒢(0, Σ) − 𝒢(0, Σ̃)‖ = ‖𝒢(0, Σ̃^{-1/2}ΣΣ̃^{-1/2}) − 𝒢(0, I)‖`
    SimultaneousWhitening,
    /// Appending a zero coordinate to both means under identity covariance.
    Padding,
}

impl Identity {
    pub const ALL: [Identity; 5] = [
        Identity::Scaling,
        Identity::MeanTranslation,
        Identity::Whitening,
        Identity::SimultaneousWhitening,
        Identity::Padding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Identity::Scaling => "scaling",
            Identity::MeanTranslation => "mean-translation",
            Identity::Whitening => "whitening",
            Identity::SimultaneousWhitening => "simultaneous-whitening",
            Identity::Padding => "padding",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub seed: u64,
    pub cases: usize,
    /// Indexed like [`Identity::ALL`].
    pub max_deviation: [f64; 5],
}

impl IdentityReport {
    pub fn deviation(&self, id: Identity) -> f64 {
        self.max_deviation[id as usize]
    }
}

struct Case {
    mu: DVector<f64>,
    mu_t: DVector<f64>,
    sigma: SymPosDefMatrix,
    sigma_t: SymPosDefMatrix,
    c: f64,
}

fn random_spd(rng: &mut ChaCha8Rng, dim: usize) -> SymPosDefMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let eig = DVector::from_fn(dim, |_, _| (rng.random_range(0.3f64.ln()..3f64.ln())).exp());
    let m = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    SymPosDefMatrix::new(m).expect("random SPD construction")
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let dim = rng.random_range(1..=3usize);
    let vec = |rng: &mut ChaCha8Rng| DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
    let mu = vec(rng);
    let mu_t = vec(rng);
    let sigma = random_spd(rng, dim);
    let sigma_t = random_spd(rng, dim);
    let mag: f64 = rng.random_range(0.3f64.ln()..3f64.ln()).exp();
    let c = if rng.random::<bool>() { mag } else { -mag };
    Case { mu, mu_t, sigma, sigma_t, c }
}

fn tv(
    m1: &DVector<f64>,
    s1: &SymPosDefMatrix,
    m2: &DVector<f64>,
    s2: &SymPosDefMatrix,
    q: &QuadratureSpec,
) -> Result<f64, GaussianError> {
    tv_general(
        &GaussianDist::new(m1.clone(), s1.clone())?,
        &GaussianDist::new(m2.clone(), s2.clone())?,
        q,
    )
}

fn check_case(case: &Case, q: &QuadratureSpec) -> Result<[f64; 5], GaussianError> {
    let dim = case.mu.len();
    let zero = DVector::zeros(dim);
    let eye = SymPosDefMatrix::identity(dim);
    let base = tv(&case.mu, &case.sigma, &case.mu_t, &case.sigma_t, q)?;

    let c2 = case.c * case.c;
    let scaled = tv(
        &(&case.mu * case.c),
        &case.sigma.scaled(c2)?,
        &(&case.mu_t * case.c),
        &case.sigma_t.scaled(c2)?,
        q,
    )?;

    let translated = tv(&(&case.mu - &case.mu_t), &case.sigma, &zero, &case.sigma_t, q)?;

    let same_cov = tv(&case.mu, &case.sigma, &case.mu_t, &case.sigma, q)?;
    let w = case.sigma.inv_sqrt();
    let whitened = tv(&(&w * &case.mu), &eye, &(&w * &case.mu_t), &eye, q)?;

    let zero_means = tv(&zero, &case.sigma, &zero, &case.sigma_t, q)?;
    let wt = case.sigma_t.inv_sqrt();
    let joint = SymPosDefMatrix::new(&wt * case.sigma.as_matrix() * &wt)?;
    let jointly_whitened = tv(&zero, &joint, &zero, &eye, q)?;

    // Tensor dimension is capped at 3, so pad from at most 2 coordinates.
    let k = dim.min(2);
    let head = case.mu.rows(0, k).into_owned();
    let head_t = case.mu_t.rows(0, k).into_owned();
    let unpadded = tv(&head, &SymPosDefMatrix::identity(k), &head_t, &SymPosDefMatrix::identity(k), q)?;
    let pad = |v: &DVector<f64>| v.clone().insert_row(k, 0.0);
    let padded = tv(
        &pad(&head),
        &SymPosDefMatrix::identity(k + 1),
        &pad(&head_t),
        &SymPosDefMatrix::identity(k + 1),
        q,
    )?;

    Ok([
        (scaled - base).abs(),
        (translated - base).abs(),
        (whitened - same_cov).abs(),
        (jointly_whitened - zero_means).abs(),
        (padded - unpadded).abs(),
    ])
}

/// Checks all five identities on `cases` random configurations drawn from
/// `seed`. Dimensions range over 1–3, scalings over `±[0.3, 3]`.
pub fn verify_gaussian_identities(seed: u64, cases: usize) -> Result<IdentityReport, GaussianError> {
    if cases == 0 {
        return Err(GaussianError::InvalidSpec("cases must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drawn: Vec<Case> = (0..cases).map(|_| random_case(&mut rng)).collect();
    // Tighter than the identity threshold so that quadrature error cannot
    // masquerade as a violation.
    let q = QuadratureSpec {
        abs_tolerance: 1e-9,
        ..QuadratureSpec::default()
    };
    let results: Vec<Result<[f64; 5], GaussianError>> =
        drawn.par_iter().map(|c| check_case(c, &q)).collect();

    let mut max_deviation = [0.0f64; 5];
    for (i, r) in results.into_iter().enumerate() {
        let devs = r?;
        for (j, &d) in devs.iter().enumerate() {
            if !(d <= THRESHOLD) {
                return Err(GaussianError::IdentityViolation {
                    identity: Identity::ALL[j].name(),
                    case: i,
                    deviation: d,
                });
            }
            max_deviation[j] = max_deviation[j].max(d);
        }
    }
    Ok(IdentityReport {
        seed,
        cases,
        max_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_case_has_zero_deviation() {
        let q = QuadratureSpec::default();
        let case = Case {
            mu: DVector::from_vec(vec![0.5, -1.0]),
            mu_t: DVector::from_vec(vec![-0.2, 0.3]),
            sigma: SymPosDefMatrix::identity(2),
            sigma_t: SymPosDefMatrix::identity(2),
            c: 1.0,
        };
        let d = check_case(&case, &q).unwrap();
        assert_eq!(d[0], 0.0);
        assert!(d.iter().all(|&x| x < 1e-9), "{d:?}");
    }

    #[test]
    fn negative_scaling_flips_means() {
        let q = QuadratureSpec::default();
        let case = Case {
            mu: DVector::from_vec(vec![1.0]),
            mu_t: DVector::from_vec(vec![-0.4]),
            sigma: SymPosDefMatrix::from_diagonal(&[0.7]).unwrap(),
            sigma_t: SymPosDefMatrix::from_diagonal(&[1.9]).unwrap(),
            c: -1.0,
        };
        assert!(check_case(&case, &q).unwrap()[0] < 1e-9);
    }

    #[test]
    fn report_is_deterministic_and_rejects_zero_cases() {
        let a = verify_gaussian_identities(7, 6).unwrap();
        let b = verify_gaussian_identities(7, 6).unwrap();
        assert_eq!(a.max_deviation, b.max_deviation);
        assert!(verify_gaussian_identities(7, 0).is_err());
    }
}
