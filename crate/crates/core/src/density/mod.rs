//! Densities on rectangular cell-centred grids (dimension ≤ 2) and the total
//! variation distances computed from them.
//!
//! Integrals are cell sums `Σ pᵢ·vol`. Every grid built here is wide enough
//! that boundary values are below `1e−16·max`, where that sum and the
//! trapezoidal rule on the centres agree to rounding.

mod fokker_planck;
mod kde;
mod stationary;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DynamicsError;

pub use fokker_planck::{fp_axis, solve_fokker_planck_1d, FpControl, FpSolution};
pub use kde::{kde_density, scott_bandwidth, Bandwidth};
pub use stationary::{
    gaussian_approx_distance, gaussian_density_on, stationary_density, stationary_density_on,
    GridSpec,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DensityError {
    #[error("unsupported dimension {0} (at most 2)")]
    UnsupportedDimension(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical range: {0}")]
    Range(String),
    #[error("incompatible grids: {0}")]
    Incompatible(String),
    #[error("bandwidth: {0}")]
    Bandwidth(String),
    #[error("time step {dt:e} exceeds the stability limit {limit:e}")]
    Stability { dt: f64, limit: f64 },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSample { needed: usize, got: usize },
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

impl From<std::io::Error> for DensityError {
    fn from(e: std::io::Error) -> Self {
        DensityError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Result<Self, DensityError> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo && cells >= 2) {
            return Err(DensityError::InvalidArgument(format!("bad axis [{lo}, {hi}] with {cells} cells")));
        }
        Ok(Self { lo, hi, cells })
    }

    pub fn symmetric(half_width: f64, cells: usize) -> Result<Self, DensityError> {
        Self::new(-half_width, half_width, cells)
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    /// Exactly antisymmetric about the midpoint, so symmetric axes give
    /// mirror-image centres.
    pub fn center(&self, i: usize) -> f64 {
        let n = self.cells as f64;
        0.5 * (self.lo + self.hi) + (2.0 * i as f64 + 1.0 - n) / (2.0 * n) * (self.hi - self.lo)
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.center(i)).collect()
    }

    fn same_as(&self, o: &Axis) -> bool {
        let tol = 1e-12 * (self.hi - self.lo).abs().max(1.0);
        self.cells == o.cells && (self.lo - o.lo).abs() <= tol && (self.hi - o.hi).abs() <= tol
    }
}

/// Density values at cell centres, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
    /// `ln M^ε` when the grid holds a normalised Gibbs density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_normalizer: Option<f64>,
}

impl DensityGrid {
    pub fn new(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self, DensityError> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(DensityError::UnsupportedDimension(axes.len()));
        }
        let n: usize = axes.iter().map(|a| a.cells).product();
        if values.len() != n {
            return Err(DensityError::InvalidArgument(format!("{} values for {n} cells", values.len())));
        }
        Ok(Self { axes, values, log_normalizer: None })
    }

    /// Evaluates `f` at every centre.
    pub fn from_fn(axes: Vec<Axis>, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self, DensityError> {
        let centers: Vec<Vec<f64>> = axes.iter().map(Axis::centers).collect();
        let values = match axes.len() {
            1 => centers[0].iter().map(|&x| f(&[x])).collect(),
            2 => {
                let mut v = Vec::with_capacity(centers[0].len() * centers[1].len());
                for &x in &centers[0] {
                    for &y in &centers[1] {
                        v.push(f(&[x, y]));
                    }
                }
                v
            }
            d => return Err(DensityError::UnsupportedDimension(d)),
        };
        Self::new(axes, values)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::width).product()
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Rescales to unit mass; fails on zero or non-finite mass.
    pub fn normalize(&mut self) -> Result<f64, DensityError> {
        let m = self.integral();
        if !(m > 0.0 && m.is_finite()) {
            return Err(DensityError::Range(format!("cannot normalise mass {m}")));
        }
        self.values.iter_mut().for_each(|v| *v /= m);
        Ok(m)
    }

    pub fn same_axes(&self, other: &DensityGrid) -> bool {
        self.axes.len() == other.axes.len() && self.axes.iter().zip(&other.axes).all(|(a, b)| a.same_as(b))
    }

    /// Mean of each coordinate under the grid density.
    pub fn mean(&self) -> Vec<f64> {
        let vol = self.cell_volume();
        let mut m = vec![0.0; self.dim()];
        self.for_each_center(|x, p| {
            for (mi, xi) in m.iter_mut().zip(x) {
                *mi += xi * p * vol;
            }
        });
        m
    }

    fn for_each_center(&self, mut f: impl FnMut(&[f64], f64)) {
        match self.dim() {
            1 => {
                for (i, &p) in self.values.iter().enumerate() {
                    f(&[self.axes[0].center(i)], p);
                }
            }
            _ => {
                let ny = self.axes[1].cells;
                for (k, &p) in self.values.iter().enumerate() {
                    f(&[self.axes[0].center(k / ny), self.axes[1].center(k % ny)], p);
                }
            }
        }
    }

    /// CSV with one column per axis and a `density` column.
    pub fn write_csv(&self, path: &Path) -> Result<(), DensityError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let names = ["x", "y"];
        writeln!(w, "{},density", names[..self.dim()].join(","))?;
        let mut err = Ok(());
        self.for_each_center(|x, p| {
            if err.is_ok() {
                let cols: Vec<String> = x.iter().map(|v| v.to_string()).collect();
                err = writeln!(w, "{},{}", cols.join(","), p);
            }
        });
        err?;
        w.flush()?;
        Ok(())
    }
}

/// `½ Σ |d1 − d2|·vol`, clamped to `[0, 1]`.
pub fn tv_between_grids(d1: &DensityGrid, d2: &DensityGrid) -> Result<f64, DensityError> {
    if !d1.same_axes(d2) {
        return Err(DensityError::Incompatible(format!("{:?} vs {:?}", d1.axes, d2.axes)));
    }
    let s: f64 = d1.values.iter().zip(&d2.values).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * s * d1.cell_volume()).clamp(0.0, 1.0))
}
