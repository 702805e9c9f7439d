use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::polynomial::Polynomial;

/// Step used when derivatives of a coupling field are approximated by central differences.
pub const FD_STEP: f64 = 1e-5;

/// A smooth, state-dependent coupling matrix `Q(x)`.
///
/// Implementors provide the value and, where known, analytic partial
/// derivatives `∂_j Q` and `∂_j ∂_t Q`. Returning `None` from a derivative
/// hook means "not available".
pub trait CouplingField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn derivative(&self, _x: &DVector<f64>, _j: usize) -> Option<DMatrix<f64>> {
        None
    }

    fn second_derivative(&self, _x: &DVector<f64>, _j: usize, _t: usize) -> Option<DMatrix<f64>> {
        None
    }
}

/// Skew-symmetric coupling with polynomial entries.
///
/// Only the strict upper triangle is stored; entry `(col, row)` is the
/// negation of entry `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialCoupling {
    dim: usize,
    entries: Vec<(usize, usize, Polynomial)>,
}

impl PolynomialCoupling {
    pub fn new(dim: usize, entries: Vec<(usize, usize, Polynomial)>) -> Result<Self> {
        for (idx, (row, col, poly)) in entries.iter().enumerate() {
            if row >= col || *col >= dim {
                return Err(Error::structural(
                    format!("q.entries[{idx}]"),
                    format!("entry ({row}, {col}) must satisfy row < col < {dim}"),
                ));
            }
            if poly.vars() != dim {
                return Err(Error::structural(
                    format!("q.entries[{idx}]"),
                    format!("polynomial has {} variables, system has {dim}", poly.vars()),
                ));
            }
        }
        Ok(PolynomialCoupling { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, Polynomial)] {
        &self.entries
    }

    pub fn degree(&self) -> usize {
        self.entries.iter().map(|(_, _, p)| p.degree()).max().unwrap_or(0)
    }

    fn assemble(&self, axes: &[usize], x: &DVector<f64>) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.dim, self.dim);
        for (row, col, poly) in &self.entries {
            let v = poly.eval_derivative(x.as_slice(), axes);
            q[(*row, *col)] += v;
            q[(*col, *row)] -= v;
        }
        q
    }
}

/// The solenoidal part `Q` of the flow operator `T = Γ - Q`.
#[derive(Clone)]
pub enum Coupling {
    Constant(DMatrix<f64>),
    Polynomial(PolynomialCoupling),
    Field {
        field: Arc<dyn CouplingField>,
        /// Allow central differences when the field lacks derivative hooks.
        fd_fallback: bool,
    },
}

impl fmt::Debug for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coupling::Constant(q) => f.debug_tuple("Constant").field(q).finish(),
            Coupling::Polynomial(p) => f.debug_tuple("Polynomial").field(p).finish(),
            Coupling::Field { fd_fallback, .. } => f
                .debug_struct("Field")
                .field("fd_fallback", fd_fallback)
                .finish_non_exhaustive(),
        }
    }
}

impl Coupling {
    pub fn zero(n: usize) -> Self {
        Coupling::Constant(DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> (usize, usize) {
        match self {
            Coupling::Constant(q) => q.shape(),
            Coupling::Polynomial(p) => (p.dim, p.dim),
            Coupling::Field { field, .. } => (field.dim(), field.dim()),
        }
    }

    /// True when `Q` does not depend on the state.
    pub fn is_constant(&self) -> bool {
        match self {
            Coupling::Constant(_) => true,
            Coupling::Polynomial(p) => p.degree() == 0,
            Coupling::Field { .. } => false,
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Coupling::Constant(q) => q.clone(),
            Coupling::Polynomial(p) => p.assemble(&[], x),
            Coupling::Field { field, .. } => field.value(x),
        }
    }

    /// `∂_j Q(x)`.
    pub fn derivative(&self, x: &DVector<f64>, j: usize) -> Result<DMatrix<f64>> {
        match self {
            Coupling::Constant(q) => Ok(DMatrix::zeros(q.nrows(), q.ncols())),
            Coupling::Polynomial(p) => Ok(p.assemble(&[j], x)),
            Coupling::Field { field, fd_fallback } => match field.derivative(x, j) {
                Some(d) => Ok(d),
                None if *fd_fallback => Ok(central_first(field.as_ref(), x, j)),
                None => Err(missing_hook("∂_j Q")),
            },
        }
    }

    /// `∂_j ∂_t Q(x)`.
    pub fn second_derivative(&self, x: &DVector<f64>, j: usize, t: usize) -> Result<DMatrix<f64>> {
        match self {
            Coupling::Constant(q) => Ok(DMatrix::zeros(q.nrows(), q.ncols())),
            Coupling::Polynomial(p) => Ok(p.assemble(&[j, t], x)),
            Coupling::Field { field, fd_fallback } => match field.second_derivative(x, j, t) {
                Some(d) => Ok(d),
                None if *fd_fallback => Ok(central_second(field.as_ref(), x, j, t)),
                None => Err(missing_hook("∂_j ∂_t Q")),
            },
        }
    }
}

fn missing_hook(what: &str) -> Error {
    Error::Configuration(format!(
        "state-dependent coupling provides no {what} and finite-difference fallback is disabled"
    ))
}

fn shifted(x: &DVector<f64>, moves: &[(usize, f64)]) -> DVector<f64> {
    let mut y = x.clone();
    for &(axis, delta) in moves {
        y[axis] += delta;
    }
    y
}

fn central_first(field: &dyn CouplingField, x: &DVector<f64>, j: usize) -> DMatrix<f64> {
    let h = FD_STEP;
    (field.value(&shifted(x, &[(j, h)])) - field.value(&shifted(x, &[(j, -h)]))) / (2.0 * h)
}

fn central_second(field: &dyn CouplingField, x: &DVector<f64>, j: usize, t: usize) -> DMatrix<f64> {
    let h = FD_STEP;
    if j == t {
        let up = field.value(&shifted(x, &[(j, h)]));
        let mid = field.value(x);
        let down = field.value(&shifted(x, &[(j, -h)]));
        (up - mid * 2.0 + down) / (h * h)
    } else {
        let pp = field.value(&shifted(x, &[(j, h), (t, h)]));
        let pm = field.value(&shifted(x, &[(j, h), (t, -h)]));
        let mp = field.value(&shifted(x, &[(j, -h), (t, h)]));
        let mm = field.value(&shifted(x, &[(j, -h), (t, -h)]));
        (pp - pm - mp + mm) / (4.0 * h * h)
    }
}
