use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::polynomial::Polynomial;

/// Highest polynomial degree accepted for a surprisal.
pub const MAX_DEGREE: usize = 4;

/// Largest dense tensor (in entries) `surprisal_tensor` will materialise.
const MAX_TENSOR_ENTRIES: usize = 1 << 24;

/// Surprisal `U(x) = -ln p(x)` up to an additive constant.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `U = ½ (x - mean)ᵀ Π (x - mean)`.
    Quadratic {
        precision: DMatrix<f64>,
        mean: DVector<f64>,
    },
    Polynomial(Polynomial),
}

impl Potential {
    pub fn quadratic(precision: DMatrix<f64>, mean: DVector<f64>) -> Result<Self> {
        if !precision.is_square() {
            return Err(Error::structural(
                "potential.precision",
                format!("not square: {}x{}", precision.nrows(), precision.ncols()),
            ));
        }
        if mean.len() != precision.nrows() {
            return Err(Error::structural(
                "potential.mean",
                format!("length {} does not match precision dimension {}", mean.len(), precision.nrows()),
            ));
        }
        Ok(Potential::Quadratic { precision, mean })
    }

    /// Centred quadratic `½ xᵀ Π x`.
    pub fn centered(precision: DMatrix<f64>) -> Result<Self> {
        let n = precision.nrows();
        Self::quadratic(precision, DVector::zeros(n))
    }

    pub fn polynomial(poly: Polynomial) -> Result<Self> {
        let degree = poly.degree();
        if degree > MAX_DEGREE {
            return Err(Error::UnsupportedDegree(degree));
        }
        Ok(Potential::Polynomial(poly))
    }

    pub fn dim(&self) -> usize {
        match self {
            Potential::Quadratic { mean, .. } => mean.len(),
            Potential::Polynomial(p) => p.vars(),
        }
    }

    /// Polynomial degree ν; the quadratic variant has degree 2.
    pub fn degree(&self) -> usize {
        match self {
            Potential::Quadratic { .. } => 2,
            Potential::Polynomial(p) => p.degree(),
        }
    }

    /// Default working point: the mean of a quadratic, the origin otherwise.
    pub fn working_point(&self) -> DVector<f64> {
        match self {
            Potential::Quadratic { mean, .. } => mean.clone(),
            Potential::Polynomial(p) => DVector::zeros(p.vars()),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Potential::Quadratic { precision, mean } => {
                let d = x - mean;
                0.5 * d.dot(&(precision * &d))
            }
            Potential::Polynomial(p) => p.eval(x.as_slice()),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Potential::Quadratic { precision, mean } => precision * (x - mean),
            Potential::Polynomial(p) => {
                DVector::from_fn(p.vars(), |a, _| p.eval_derivative(x.as_slice(), &[a]))
            }
        }
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Potential::Quadratic { precision, .. } => precision.clone(),
            Potential::Polynomial(p) => {
                let n = p.vars();
                let mut h = DMatrix::zeros(n, n);
                for a in 0..n {
                    for b in a..n {
                        let v = p.eval_derivative(x.as_slice(), &[a, b]);
                        h[(a, b)] = v;
                        h[(b, a)] = v;
                    }
                }
                h
            }
        }
    }

    /// Single mixed partial `∂_{axes} U(x)`.
    pub fn partial(&self, x: &DVector<f64>, axes: &[usize]) -> f64 {
        match self {
            Potential::Quadratic { precision, mean } => match axes {
                [] => self.value(x),
                [a] => precision.row(*a).dot(&(x - mean).transpose()),
                [a, b] => precision[(*a, *b)],
                _ => 0.0,
            },
            Potential::Polynomial(p) => p.eval_derivative(x.as_slice(), axes),
        }
    }
}

/// Dense tensor of order ν over `dim` coordinates, symmetric under index permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

impl SymmetricTensor {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.order, "multi-index has wrong length");
        index.iter().fold(0, |acc, &a| {
            assert!(a < self.dim, "index {a} out of range");
            acc * self.dim + a
        })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Order-2 tensors as a matrix.
    pub fn to_matrix(&self) -> Option<DMatrix<f64>> {
        (self.order == 2).then(|| DMatrix::from_row_slice(self.dim, self.dim, &self.data))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Tensor of ν-th partial derivatives of `U` at `x`.
///
/// Orders above the polynomial degree give the zero tensor.
pub fn surprisal_tensor(potential: &Potential, x: &DVector<f64>, order: usize) -> Result<SymmetricTensor> {
    if order == 0 {
        return Err(Error::Configuration("tensor order must be at least 1".into()));
    }
    let dim = potential.dim();
    if x.len() != dim {
        return Err(Error::structural(
            "x",
            format!("state has length {}, potential has {dim} coordinates", x.len()),
        ));
    }
    let entries = dim
        .checked_pow(order as u32)
        .filter(|&e| e <= MAX_TENSOR_ENTRIES)
        .ok_or_else(|| Error::Configuration(format!("{dim}^{order} tensor entries is too large")))?;

    let mut data = vec![0.0; entries];
    if order <= potential.degree() {
        let mut index = vec![0usize; order];
        let mut sorted = vec![0usize; order];
        let mut cache = std::collections::HashMap::new();
        for (slot, value) in data.iter_mut().enumerate() {
            let mut rem = slot;
            for pos in (0..order).rev() {
                index[pos] = rem % dim;
                rem /= dim;
            }
            sorted.copy_from_slice(&index);
            sorted.sort_unstable();
            *value = *cache
                .entry(sorted.clone())
                .or_insert_with(|| potential.partial(x, &sorted));
        }
    }
    Ok(SymmetricTensor { order, dim, data })
}
