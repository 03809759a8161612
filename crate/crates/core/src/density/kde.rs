use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Axis, DensityError, DensityGrid};
use crate::gaussian_tv::std_normal_interval;
use crate::sde_sim::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    Fixed(f64),
    /// `hⱼ = σⱼ·n^{−1/(d+4)}`.
    Scott,
}

const MIN_SAMPLES: usize = 100;
const CHUNK: usize = 4096;
/// Kernel support in bandwidths.
const REACH: f64 = 8.0;

pub fn scott_bandwidth(values: &[f64], dim: usize) -> Result<f64, DensityError> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0) && sd.is_finite()) {
        return Err(DensityError::Bandwidth(format!("degenerate sample spread {sd}")));
    }
    Ok(sd * n.powf(-1.0 / (dim as f64 + 4.0)))
}

/// Cell masses of a 1D Gaussian kernel, restricted to cells within reach.
fn axis_weights(axis: &Axis, s: f64, h: f64) -> (usize, Vec<f64>) {
    let dx = axis.width();
    let first = (((s - REACH * h - axis.lo) / dx).floor().max(0.0) as usize).min(axis.cells);
    let last = (((s + REACH * h - axis.lo) / dx).ceil().max(0.0) as usize).min(axis.cells);
    let w = (first..last)
        .map(|i| {
            let a = axis.lo + i as f64 * dx;
            std_normal_interval((a - s) / h, (a + dx - s) / h)
        })
        .collect();
    (first, w)
}

/// Gaussian-kernel estimate with cell-averaged kernels, normalised on the
/// grid. Deterministic: partial sums are combined in a fixed order.
pub fn kde_density(samples: &SampleSet, rule: Bandwidth, axes: &[Axis]) -> Result<DensityGrid, DensityError> {
    let d = samples.dim;
    if d == 0 || d > 2 {
        return Err(DensityError::UnsupportedDimension(d));
    }
    if axes.len() != d {
        return Err(DensityError::Incompatible(format!("{} axes for {d}-D samples", axes.len())));
    }
    if samples.len() < MIN_SAMPLES {
        return Err(DensityError::InsufficientSample { needed: MIN_SAMPLES, got: samples.len() });
    }
    let h: Vec<f64> = match rule {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => vec![h; d],
        Bandwidth::Fixed(h) => return Err(DensityError::Bandwidth(format!("invalid bandwidth {h}"))),
        Bandwidth::Scott => (0..d)
            .map(|j| scott_bandwidth(&samples.coordinate(j), d))
            .collect::<Result<_, _>>()?,
    };
    let n_cells: usize = axes.iter().map(|a| a.cells).product();
    let partials: Vec<Vec<f64>> = samples
        .data
        .par_chunks(CHUNK * d)
        .map(|chunk| {
            let mut acc = vec![0.0; n_cells];
            for s in chunk.chunks(d) {
                let (f0, w0) = axis_weights(&axes[0], s[0], h[0]);
                if d == 1 {
                    for (k, w) in w0.iter().enumerate() {
                        acc[f0 + k] += w;
                    }
                } else {
                    let (f1, w1) = axis_weights(&axes[1], s[1], h[1]);
                    let ny = axes[1].cells;
                    for (a, wa) in w0.iter().enumerate() {
                        let row = (f0 + a) * ny + f1;
                        for (b, wb) in w1.iter().enumerate() {
                            acc[row + b] += wa * wb;
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut values = vec![0.0; n_cells];
    for part in partials {
        for (v, p) in values.iter_mut().zip(part) {
            *v += p;
        }
    }
    let mut g = DensityGrid::new(axes.to_vec(), values)?;
    g.normalize()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{gaussian_density_on, tv_between_grids};
    use crate::dynamics::PotentialModel;
    use crate::gaussian_tv::GaussianDist;
    use crate::sde_sim::{sample_stationary, StationaryMethod};

    #[test]
    fn scott_rule_arithmetic() {
        let m = PotentialModel::ou_diagonal(vec![1.0]).unwrap();
        // ε = 2 gives unit variance.
        let s = sample_stationary(&m, 2.0, 10_000, 3, StationaryMethod::ExactGaussian).unwrap();
        let h = scott_bandwidth(&s.coordinate(0), 1).unwrap();
        assert!((h - 0.158).abs() < 0.005, "{h}");
    }

    #[test]
    fn recovers_gaussian() {
        let m = PotentialModel::ou_diagonal(vec![1.0]).unwrap();
        let s = sample_stationary(&m, 2.0, 100_000, 5, StationaryMethod::ExactGaussian).unwrap();
        let axis = Axis::symmetric(8.0, 800).unwrap();
        let k = kde_density(&s, Bandwidth::Scott, &[axis]).unwrap();
        let g = gaussian_density_on(&[axis], &GaussianDist::scalar(0.0, 1.0).unwrap()).unwrap();
        let tv = tv_between_grids(&k, &g).unwrap();
        assert!(tv <= 0.02, "{tv}");
    }

    #[test]
    fn two_dimensional_and_deterministic() {
        let m = PotentialModel::ou_diagonal(vec![1.0, 2.0]).unwrap();
        let s = sample_stationary(&m, 0.2, 20_000, 8, StationaryMethod::ExactGaussian).unwrap();
        let axes = [Axis::symmetric(2.0, 100).unwrap(), Axis::symmetric(1.5, 80).unwrap()];
        let a = kde_density(&s, Bandwidth::Scott, &axes).unwrap();
        let b = crate::with_workers(Some(1), || kde_density(&s, Bandwidth::Scott, &axes)).unwrap();
        assert_eq!(a, b);
        assert!((a.integral() - 1.0).abs() < 1e-12);
        let g = GaussianDist::new(
            nalgebra::DVector::zeros(2),
            crate::gaussian_tv::SymPosDefMatrix::from_diagonal(&[0.1, 0.05]).unwrap(),
        )
        .unwrap();
        let tv = tv_between_grids(&a, &gaussian_density_on(&axes, &g).unwrap()).unwrap();
        assert!(tv < 0.05, "{tv}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let axis = Axis::symmetric(1.0, 10).unwrap();
        let few = SampleSet { dim: 1, data: vec![0.0; 50] };
        assert!(matches!(
            kde_density(&few, Bandwidth::Scott, &[axis]),
            Err(DensityError::InsufficientSample { .. })
        ));
        let flat = SampleSet { dim: 1, data: vec![0.3; 500] };
        assert!(matches!(kde_density(&flat, Bandwidth::Scott, &[axis]), Err(DensityError::Bandwidth(_))));
    }
}
