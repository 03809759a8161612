use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::truncation::Truncation;
use super::DynamicsError;
use crate::gaussian_tv::SymPosDefMatrix;

/// Anything that drives `dx = −F(x) dt (+ noise)`: gradients of potentials
/// and coercive vector fields alike.
pub trait Drift: Sync {
    fn dim(&self) -> usize;
    /// Writes `F(x)` into `out`.
    fn drift_into(&self, x: &[f64], out: &mut [f64]);
    /// Writes `DF(x)` into `out` (row-major `dim × dim`).
    fn jacobian_into(&self, x: &[f64], out: &mut [f64]);
    /// Coercivity constant `δ`.
    fn declared_delta(&self) -> f64;
    fn declared_big_delta(&self) -> Option<f64>;

    fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.drift_into(x, &mut out);
        out
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n * n];
        self.jacobian_into(x, &mut out);
        DMatrix::from_row_slice(n, n, &out)
    }
}

/// `coeff · Π xᵢ^{powers[i]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

impl Monomial {
    fn degree(&self) -> u32 {
        self.powers.iter().sum()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.coeff * self.powers.iter().zip(x).map(|(&p, &xi)| xi.powi(p as i32)).product::<f64>()
    }

    /// `∂/∂x_k` of the monomial.
    fn partial(&self, x: &[f64], k: usize) -> f64 {
        let pk = self.powers[k];
        if pk == 0 {
            return 0.0;
        }
        let mut v = self.coeff * pk as f64;
        for (i, (&p, &xi)) in self.powers.iter().zip(x).enumerate() {
            let e = if i == k { p - 1 } else { p };
            v *= xi.powi(e as i32);
        }
        v
    }

    fn second_partial(&self, x: &[f64], k: usize, l: usize) -> f64 {
        let mut pw = self.powers.clone();
        let mut v = self.coeff;
        for idx in [k, l] {
            if pw[idx] == 0 {
                return 0.0;
            }
            v *= pw[idx] as f64;
            pw[idx] -= 1;
        }
        v * pw.iter().zip(x).map(|(&p, &xi)| xi.powi(p as i32)).product::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// `V = ½ Σ rᵢ xᵢ²`
    OuDiagonal { rates: Vec<f64> },
    /// `V = ½ xᵀ A x`
    Quadratic { matrix: SymPosDefMatrix },
    /// `V = a x²/2 + β x⁴/4`
    Quartic1d { a: f64, beta: f64 },
    Truncated(Box<Truncation>),
    Polynomial { dim: usize, terms: Vec<Monomial> },
}

/// Potential `V` with `V(0) = 0`, `∇V(0) = 0` and declared Hessian bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialModel {
    kind: PotentialKind,
    delta: f64,
    big_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl PotentialModel {
    pub fn ou_diagonal(rates: Vec<f64>) -> Result<Self, DynamicsError> {
        if rates.is_empty() || rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(DynamicsError::InvalidModel("rates must be finite and positive".into()));
        }
        let delta = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let big = rates.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            kind: PotentialKind::OuDiagonal { rates },
            delta,
            big_delta: Some(big),
        })
    }

    pub fn quadratic(matrix: SymPosDefMatrix) -> Self {
        let ev = matrix.eigenvalues();
        let delta = ev.min();
        let big = ev.max();
        Self {
            kind: PotentialKind::Quadratic { matrix },
            delta,
            big_delta: Some(big),
        }
    }

    pub fn quartic_1d(a: f64, beta: f64) -> Result<Self, DynamicsError> {
        if !(a.is_finite() && a > 0.0 && beta.is_finite() && beta >= 0.0) {
            return Err(DynamicsError::InvalidModel("quartic needs a > 0 and β ≥ 0".into()));
        }
        Ok(Self {
            kind: PotentialKind::Quartic1d { a, beta },
            delta: a,
            big_delta: if beta == 0.0 { Some(a) } else { None },
        })
    }

    /// Polynomial potential. Coercivity cannot be derived symbolically, so
    /// `delta` (and optionally `big_delta`) must be supplied; use
    /// [`super::check_coercivity`] to test the claim.
    pub fn polynomial(
        dim: usize,
        terms: Vec<Monomial>,
        delta: f64,
        big_delta: Option<f64>,
    ) -> Result<Self, DynamicsError> {
        if dim == 0 {
            return Err(DynamicsError::InvalidModel("dimension must be positive".into()));
        }
        for t in &terms {
            if t.powers.len() != dim {
                return Err(DynamicsError::DimensionMismatch {
                    expected: dim,
                    found: t.powers.len(),
                });
            }
            if !t.coeff.is_finite() {
                return Err(DynamicsError::InvalidModel("non-finite coefficient".into()));
            }
            if t.degree() < 2 && t.coeff != 0.0 {
                return Err(DynamicsError::InvalidModel(
                    "constant and linear terms violate V(0) = 0, ∇V(0) = 0".into(),
                ));
            }
        }
        Self::check_bounds(delta, big_delta)?;
        Ok(Self {
            kind: PotentialKind::Polynomial { dim, terms },
            delta,
            big_delta,
        })
    }

    pub(super) fn truncated(t: Truncation, delta: f64, big_delta: f64) -> Self {
        Self {
            kind: PotentialKind::Truncated(Box::new(t)),
            delta,
            big_delta: Some(big_delta),
        }
    }

    fn check_bounds(delta: f64, big_delta: Option<f64>) -> Result<(), DynamicsError> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(DynamicsError::InvalidModel("declared δ must be positive".into()));
        }
        if let Some(d) = big_delta {
            if !(d >= delta) {
                return Err(DynamicsError::InvalidModel("declared Δ must be at least δ".into()));
            }
        }
        Ok(())
    }

    /// Replaces the declared bounds, e.g. with values confirmed by sampling.
    pub fn with_bounds(mut self, delta: f64, big_delta: Option<f64>) -> Result<Self, DynamicsError> {
        Self::check_bounds(delta, big_delta)?;
        self.delta = delta;
        self.big_delta = big_delta;
        Ok(self)
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn is_quadratic(&self) -> bool {
        match &self.kind {
            PotentialKind::OuDiagonal { .. } | PotentialKind::Quadratic { .. } => true,
            PotentialKind::Quartic1d { beta, .. } => *beta == 0.0,
            PotentialKind::Polynomial { terms, .. } => {
                terms.iter().all(|t| t.coeff == 0.0 || t.degree() == 2)
            }
            PotentialKind::Truncated(_) => false,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::OuDiagonal { rates } => {
                0.5 * rates.iter().zip(x).map(|(r, v)| r * v * v).sum::<f64>()
            }
            PotentialKind::Quadratic { matrix } => {
                let a = matrix.as_matrix();
                let n = x.len();
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += x[i] * a[(i, j)] * x[j];
                    }
                }
                0.5 * s
            }
            PotentialKind::Quartic1d { a, beta } => {
                let x2 = x[0] * x[0];
                0.5 * a * x2 + 0.25 * beta * x2 * x2
            }
            PotentialKind::Truncated(t) => t.value(x[0]),
            PotentialKind::Polynomial { terms, .. } => terms.iter().map(|t| t.value(x)).sum(),
        }
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            PotentialKind::OuDiagonal { rates } => {
                for ((o, r), v) in out.iter_mut().zip(rates).zip(x) {
                    *o = r * v;
                }
            }
            PotentialKind::Quadratic { matrix } => {
                let a = matrix.as_matrix();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..x.len()).map(|j| a[(i, j)] * x[j]).sum();
                }
            }
            PotentialKind::Quartic1d { a, beta } => {
                out[0] = a * x[0] + beta * x[0] * x[0] * x[0];
            }
            PotentialKind::Truncated(t) => out[0] = t.derivative(x[0]),
            PotentialKind::Polynomial { terms, .. } => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = terms.iter().map(|t| t.partial(x, k)).sum();
                }
            }
        }
    }

    pub fn hessian_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        match &self.kind {
            PotentialKind::OuDiagonal { rates } => {
                out.fill(0.0);
                for (i, r) in rates.iter().enumerate() {
                    out[i * n + i] = *r;
                }
            }
            PotentialKind::Quadratic { matrix } => {
                let a = matrix.as_matrix();
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] = a[(i, j)];
                    }
                }
            }
            PotentialKind::Quartic1d { a, beta } => out[0] = a + 3.0 * beta * x[0] * x[0],
            PotentialKind::Truncated(t) => out[0] = t.second_derivative(x[0]),
            PotentialKind::Polynomial { terms, .. } => {
                for k in 0..n {
                    for l in k..n {
                        let v: f64 = terms.iter().map(|t| t.second_partial(x, k, l)).sum();
                        out[k * n + l] = v;
                        out[l * n + k] = v;
                    }
                }
            }
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<ModelEval, DynamicsError> {
        let n = self.dim();
        if x.len() != n {
            return Err(DynamicsError::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite);
        }
        let mut g = vec![0.0; n];
        self.gradient_into(x, &mut g);
        let mut h = vec![0.0; n * n];
        self.hessian_into(x, &mut h);
        Ok(ModelEval {
            value: self.value(x),
            grad: DVector::from_vec(g),
            hess: DMatrix::from_row_slice(n, n, &h),
        })
    }

    pub fn hessian_at_origin(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = vec![0.0; n * n];
        self.hessian_into(&vec![0.0; n], &mut h);
        DMatrix::from_row_slice(n, n, &h)
    }
}

impl Drift for PotentialModel {
    fn dim(&self) -> usize {
        match &self.kind {
            PotentialKind::OuDiagonal { rates } => rates.len(),
            PotentialKind::Quadratic { matrix } => matrix.dim(),
            PotentialKind::Quartic1d { .. } | PotentialKind::Truncated(_) => 1,
            PotentialKind::Polynomial { dim, .. } => *dim,
        }
    }

    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        self.gradient_into(x, out)
    }

    fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        self.hessian_into(x, out)
    }

    fn declared_delta(&self) -> f64 {
        self.delta
    }

    fn declared_big_delta(&self) -> Option<f64> {
        self.big_delta
    }
}

/// Free `evaluate_model` entry point mirroring [`PotentialModel::evaluate`].
pub fn evaluate_model(model: &PotentialModel, x: &[f64]) -> Result<ModelEval, DynamicsError> {
    model.evaluate(x)
}

/// Non-gradient coercive field `F(x) = ∇V(x) + s·(‖x‖²/(1+‖x‖²))·Jx`, with
/// `J` the rotation generator on the first two coordinates.
///
/// `DF(0) = H_V(0)` stays symmetric, and the skew part costs at most `|s|/2`
/// of coercivity, so the declared constant is `δ_V − |s|/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldModel {
    base: PotentialModel,
    swirl: f64,
    delta: f64,
}

impl VectorFieldModel {
    pub fn swirl(base: PotentialModel, swirl: f64) -> Result<Self, DynamicsError> {
        if base.dim() < 2 {
            return Err(DynamicsError::InvalidModel("swirl needs dimension ≥ 2".into()));
        }
        let delta = base.declared_delta() - 0.5 * swirl.abs();
        if !(swirl.is_finite() && delta > 0.0) {
            return Err(DynamicsError::InvalidModel(format!(
                "swirl strength {swirl} destroys coercivity (δ − |s|/2 = {delta})"
            )));
        }
        Ok(Self { base, swirl, delta })
    }

    pub fn base(&self) -> &PotentialModel {
        &self.base
    }
}

impl Drift for VectorFieldModel {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        self.base.gradient_into(x, out);
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let g = self.swirl * r2 / (1.0 + r2);
        out[0] += g * x[1];
        out[1] -= g * x[0];
    }

    fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        self.base.hessian_into(x, out);
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let g = r2 / (1.0 + r2);
        let dg = 1.0 / ((1.0 + r2) * (1.0 + r2));
        // d/dx_k [g(‖x‖²) (x1, −x0)] = 2 g' x_k (x1, −x0) + g ∂_k(x1, −x0)
        for k in 0..n {
            out[k] += self.swirl * 2.0 * dg * x[k] * x[1];
            out[n + k] -= self.swirl * 2.0 * dg * x[k] * x[0];
        }
        out[1] += self.swirl * g;
        out[n] -= self.swirl * g;
    }

    fn declared_delta(&self) -> f64 {
        self.delta
    }

    fn declared_big_delta(&self) -> Option<f64> {
        self.base.declared_big_delta().map(|d| d + 1.5 * self.swirl.abs())
    }
}

/// A model as configured: gradient or general coercive field.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Potential(PotentialModel),
    Field(VectorFieldModel),
}

impl Model {
    pub fn potential(&self) -> Option<&PotentialModel> {
        match self {
            Model::Potential(p) => Some(p),
            Model::Field(_) => None,
        }
    }

    pub fn as_drift(&self) -> &dyn Drift {
        match self {
            Model::Potential(p) => p,
            Model::Field(f) => f,
        }
    }
}

/// Serializable model description used by configuration files and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    OuDiagonal {
        rates: Vec<f64>,
    },
    Quadratic {
        matrix: Vec<Vec<f64>>,
    },
    #[serde(rename = "quartic-1d")]
    Quartic1d {
        a: f64,
        beta: f64,
    },
    Truncated {
        base: Box<ModelSpec>,
        radius: f64,
    },
    Polynomial {
        dim: usize,
        terms: Vec<Monomial>,
        delta: f64,
        #[serde(default)]
        big_delta: Option<f64>,
    },
    Swirl {
        base: Box<ModelSpec>,
        strength: f64,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<Model, DynamicsError> {
        match self {
            ModelSpec::Swirl { base, strength } => Ok(Model::Field(VectorFieldModel::swirl(
                base.build_potential()?,
                *strength,
            )?)),
            _ => Ok(Model::Potential(self.build_potential()?)),
        }
    }

    pub fn build_potential(&self) -> Result<PotentialModel, DynamicsError> {
        match self {
            ModelSpec::OuDiagonal { rates } => PotentialModel::ou_diagonal(rates.clone()),
            ModelSpec::Quadratic { matrix } => {
                let n = matrix.len();
                if matrix.iter().any(|r| r.len() != n) || n == 0 {
                    return Err(DynamicsError::InvalidModel("quadratic matrix must be square".into()));
                }
                let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
                Ok(PotentialModel::quadratic(SymPosDefMatrix::new(m)?))
            }
            ModelSpec::Quartic1d { a, beta } => PotentialModel::quartic_1d(*a, *beta),
            ModelSpec::Truncated { base, radius } => {
                super::build_truncated_model(&base.build_potential()?, *radius)
            }
            ModelSpec::Polynomial {
                dim,
                terms,
                delta,
                big_delta,
            } => PotentialModel::polynomial(*dim, terms.clone(), *delta, *big_delta),
            ModelSpec::Swirl { .. } => Err(DynamicsError::InvalidModel(
                "swirl fields are not gradients of a potential".into(),
            )),
        }
    }

    /// Compact presets: `ou:1,2`, `quadratic:a11,a12,a21,a22`, `quartic:a,beta`,
    /// `truncated-quartic:a,beta,M`.
    pub fn parse_preset(s: &str) -> Result<Self, DynamicsError> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = if args.is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| DynamicsError::InvalidModel(format!("bad preset '{s}': {e}")))?
        };
        let bad = || DynamicsError::InvalidModel(format!("bad preset '{s}'"));
        match name {
            "ou" if !nums.is_empty() => Ok(ModelSpec::OuDiagonal { rates: nums }),
            "quadratic" => {
                let n = (nums.len() as f64).sqrt().round() as usize;
                if n == 0 || n * n != nums.len() {
                    return Err(bad());
                }
                Ok(ModelSpec::Quadratic {
                    matrix: nums.chunks(n).map(<[f64]>::to_vec).collect(),
                })
            }
            "quartic" if nums.len() == 2 => Ok(ModelSpec::Quartic1d {
                a: nums[0],
                beta: nums[1],
            }),
            "truncated-quartic" if nums.len() == 3 => Ok(ModelSpec::Truncated {
                base: Box::new(ModelSpec::Quartic1d {
                    a: nums[0],
                    beta: nums[1],
                }),
                radius: nums[2],
            }),
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(model: &dyn Drift, x: &[f64], value: Option<&dyn Fn(&[f64]) -> f64>) {
        let n = model.dim();
        let h = 1e-6;
        let g = model.drift(x);
        let j = model.jacobian(x);
        for k in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            if let Some(v) = value {
                let fd = (v(&xp) - v(&xm)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6 * (1.0 + g[k].abs()), "grad {k}: {fd} vs {}", g[k]);
            }
            let gp = model.drift(&xp);
            let gm = model.drift(&xm);
            for i in 0..n {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                assert!((fd - j[(i, k)]).abs() < 1e-6 * (1.0 + fd.abs()), "jac ({i},{k}): {fd} vs {}", j[(i, k)]);
            }
        }
    }

    #[test]
    fn ou_at_origin() {
        let m = PotentialModel::ou_diagonal(vec![1.0, 2.0]).unwrap();
        let e = m.evaluate(&[0.0, 0.0]).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.grad, DVector::zeros(2));
        assert_eq!(e.hess, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])));
    }

    #[test]
    fn quartic_hand_values() {
        let m = PotentialModel::quartic_1d(1.0, 1.0).unwrap();
        let e = m.evaluate(&[2.0]).unwrap();
        assert_eq!((e.value, e.grad[0], e.hess[(0, 0)]), (6.0, 10.0, 13.0));
        fd_check(&m, &[0.7], Some(&|x: &[f64]| m.value(x)));
    }

    #[test]
    fn quadratic_and_polynomial_match_finite_differences() {
        let a = SymPosDefMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let q = PotentialModel::quadratic(a);
        let x = [0.3, -1.2];
        let e = q.evaluate(&x).unwrap();
        assert!((e.grad[0] - (2.0 * 0.3 + 0.5 * -1.2)).abs() < 1e-15);
        fd_check(&q, &x, Some(&|x: &[f64]| q.value(x)));

        let p = PotentialModel::polynomial(
            2,
            vec![
                Monomial { coeff: 0.5, powers: vec![2, 0] },
                Monomial { coeff: 1.0, powers: vec![0, 2] },
                Monomial { coeff: 0.25, powers: vec![2, 2] },
                Monomial { coeff: 0.1, powers: vec![4, 0] },
            ],
            1.0,
            None,
        )
        .unwrap();
        fd_check(&p, &[0.4, -0.9], Some(&|x: &[f64]| p.value(x)));
        assert!(PotentialModel::polynomial(1, vec![Monomial { coeff: 1.0, powers: vec![1] }], 1.0, None).is_err());
    }

    #[test]
    fn swirl_field_jacobian_and_origin() {
        let base = PotentialModel::ou_diagonal(vec![1.0, 1.5]).unwrap();
        let f = VectorFieldModel::swirl(base, 0.8).unwrap();
        assert!((f.declared_delta() - 0.6).abs() < 1e-15);
        fd_check(&f, &[0.6, -0.4], None);
        let j0 = f.jacobian(&[0.0, 0.0]);
        assert_eq!(j0, j0.transpose());
        assert!(VectorFieldModel::swirl(PotentialModel::ou_diagonal(vec![1.0, 1.0]).unwrap(), 2.5).is_err());
    }

    #[test]
    fn spec_round_trip_and_presets() {
        let s = ModelSpec::parse_preset("truncated-quartic:1,1,2").unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<ModelSpec>(&json).unwrap(), s);
        assert!(serde_json::from_str::<ModelSpec>(r#"{"kind":"quartic-1d","a":1,"beta":1,"x":2}"#).is_err());
        assert!(matches!(ModelSpec::parse_preset("ou:1,2").unwrap().build().unwrap(), Model::Potential(_)));
        assert!(ModelSpec::parse_preset("bogus").is_err());
    }
}
