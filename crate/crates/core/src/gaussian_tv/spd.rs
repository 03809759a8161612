use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::GaussianError;

/// Relative tolerance for the symmetry check on construction.
const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues below this fraction of the spectral radius are treated as singular.
const EIGEN_FLOOR: f64 = 1e-14;

/// Dense symmetric positive-definite matrix with a cached eigendecomposition.
///
/// Square roots and inverses go through the symmetric eigendecomposition, so
/// they are exact up to rounding for every accepted matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymPosDefMatrix {
    matrix: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl PartialEq for SymPosDefMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl SymPosDefMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, GaussianError> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(GaussianError::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(GaussianError::NonFinite);
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(GaussianError::NotSymmetric { asymmetry: asym / scale });
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let radius = eig.eigenvalues.amax();
        let min = eig.eigenvalues.min();
        if !(min > EIGEN_FLOOR * radius) {
            return Err(GaussianError::NotPositiveDefinite {
                min_eigenvalue: min,
                spectral_radius: radius,
            });
        }
        Ok(Self {
            matrix: sym,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, GaussianError> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    fn spectral_function(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        let d = DMatrix::from_diagonal(&self.eigenvalues.map(f));
        let out = q * d * q.transpose();
        (&out + out.transpose()) * 0.5
    }

    /// Principal square root.
    pub fn sqrt(&self) -> DMatrix<f64> {
        self.spectral_function(f64::sqrt)
    }

    /// Inverse of the principal square root.
    pub fn inv_sqrt(&self) -> DMatrix<f64> {
        self.spectral_function(|l| 1.0 / l.sqrt())
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.spectral_function(|l| 1.0 / l)
    }

    pub fn log_det(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.ln()).sum()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, GaussianError> {
        Self::new(&self.matrix * factor)
    }

    /// `A x B x Aᵀ`-style congruence `t · self · tᵀ`.
    pub fn congruence(&self, t: &DMatrix<f64>) -> Result<Self, GaussianError> {
        let out = t * &self.matrix * t.transpose();
        Self::new((&out + out.transpose()) * 0.5)
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymPosDefMatrix {
    type Error = GaussianError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(GaussianError::DimensionMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

impl From<SymPosDefMatrix> for Vec<Vec<f64>> {
    fn from(m: SymPosDefMatrix) -> Self {
        m.matrix.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}
