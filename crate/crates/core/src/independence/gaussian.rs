use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::PartitionSpec;
use crate::potential::{surprisal_tensor, Potential};

/// `‖Π Σ - I‖_∞` allowed after inverting the precision.
const INVERSE_TOL: f64 = 1e-8;

/// Stationary law `N(mean, Π⁻¹)` of a quadratic-surprisal system.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    precision: DMatrix<f64>,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    partition: PartitionSpec,
}

impl GaussianModel {
    pub fn new(precision: DMatrix<f64>, mean: DVector<f64>, partition: PartitionSpec) -> Result<Self> {
        let n = partition.n();
        if precision.shape() != (n, n) {
            return Err(Error::structural(
                "precision",
                format!("expected {n}x{n}, got {}x{}", precision.nrows(), precision.ncols()),
            ));
        }
        if mean.len() != n {
            return Err(Error::structural("mean", format!("expected length {n}, got {}", mean.len())));
        }
        let asym = (&precision - precision.transpose()).amax();
        if asym > crate::system::SYMMETRY_TOL {
            return Err(Error::structural("precision", format!("not symmetric (max |Π - Πᵀ| = {asym:e})")));
        }
        let chol = Cholesky::new(precision.clone()).ok_or_else(|| Error::Degenerate {
            what: "precision",
            detail: "matrix is not positive definite".into(),
        })?;
        let covariance = chol.inverse();
        let residual = (&precision * &covariance - DMatrix::identity(n, n)).amax();
        if residual > INVERSE_TOL {
            return Err(Error::Degenerate {
                what: "precision",
                detail: format!("inverse residual {residual:e} exceeds {INVERSE_TOL:e}"),
            });
        }
        Ok(GaussianModel {
            precision,
            mean,
            covariance,
            partition,
        })
    }

    /// The stationary law of a system with quadratic surprisal.
    pub fn from_potential(potential: &Potential, partition: PartitionSpec) -> Result<Self> {
        match potential {
            Potential::Quadratic { precision, mean } => Self::new(precision.clone(), mean.clone(), partition),
            Potential::Polynomial(_) => Err(Error::Configuration(
                "Gaussian model needs a quadratic surprisal".into(),
            )),
        }
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn partition(&self) -> &PartitionSpec {
        &self.partition
    }

    pub fn potential(&self) -> Potential {
        Potential::Quadratic {
            precision: self.precision.clone(),
            mean: self.mean.clone(),
        }
    }
}

fn check_coords(n: usize, name: &str, coords: &[usize]) -> Result<()> {
    match coords.iter().find(|&&c| c >= n) {
        Some(c) => Err(Error::Index(format!("{name} coordinate {c} out of 0..{n}"))),
        None => Ok(()),
    }
}

/// `E[x_target | x_given = values]`, marginalising every other coordinate.
pub fn conditional_mean(model: &GaussianModel, target: &[usize], given: &[usize], values: &[f64]) -> Result<DVector<f64>> {
    let n = model.mean.len();
    check_coords(n, "target", target)?;
    check_coords(n, "given", given)?;
    if let Some(c) = target.iter().find(|c| given.contains(c)) {
        return Err(Error::Configuration(format!("coordinate {c} is both target and given")));
    }
    if values.len() != given.len() {
        return Err(Error::structural(
            "values",
            format!("{} values for {} conditioning coordinates", values.len(), given.len()),
        ));
    }
    let mut out = DVector::from_fn(target.len(), |r, _| model.mean[target[r]]);
    if given.is_empty() {
        return Ok(out);
    }
    let sigma = &model.covariance;
    let s_bb = DMatrix::from_fn(given.len(), given.len(), |r, c| sigma[(given[r], given[c])]);
    let s_ab = DMatrix::from_fn(target.len(), given.len(), |r, c| sigma[(target[r], given[c])]);
    let chol = Cholesky::new(s_bb).ok_or_else(|| Error::Degenerate {
        what: "conditioning block",
        detail: "covariance of the given coordinates is singular".into(),
    })?;
    let shift = DVector::from_fn(given.len(), |r, _| values[r] - model.mean[given[r]]);
    out += s_ab * chol.solve(&shift);
    Ok(out)
}

/// True iff every `|Π_{η^i μ^j}| <= tol`.
pub fn is_blanket(model: &GaussianModel, tol: f64) -> bool {
    max_cross_precision(model) <= tol
}

fn max_cross_precision(model: &GaussianModel) -> f64 {
    let p = &model.partition;
    p.internal()
        .flat_map(|i| p.external().map(move |j| (i, j)))
        .map(|(i, j)| model.precision[(i, j)].abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlanketCertificate {
    pub is_blanket: bool,
    pub max_cross_precision: f64,
    /// `max_j ‖E[η | b = m_b, μ = m_μ + e_j] - E[η | b = m_b]‖_∞`.
    pub conditional_mean_gap: f64,
    /// The precision criterion and the conditional-mean criterion (at `tol`) agree.
    pub consistent: bool,
}

/// [`is_blanket`] together with the conditional-mean invariance `E[η | b, μ] = E[η | b]` it encodes.
pub fn blanket_certificate(model: &GaussianModel, tol: f64) -> Result<BlanketCertificate> {
    let p = model.partition;
    let eta: Vec<usize> = p.internal().collect();
    let b: Vec<usize> = p.blanket().collect();
    let b_mu: Vec<usize> = p.blanket().chain(p.external()).collect();
    let b_values: Vec<f64> = b.iter().map(|&c| model.mean[c]).collect();

    let given_b = conditional_mean(model, &eta, &b, &b_values)?;
    let mut gap = 0.0f64;
    for j in p.external() {
        let values: Vec<f64> = b_mu
            .iter()
            .map(|&c| model.mean[c] + if c == j { 1.0 } else { 0.0 })
            .collect();
        let given_b_mu = conditional_mean(model, &eta, &b_mu, &values)?;
        gap = gap.max((given_b_mu - &given_b).amax());
    }
    let max_cross = max_cross_precision(model);
    let is_blanket = max_cross <= tol;
    Ok(BlanketCertificate {
        is_blanket,
        max_cross_precision: max_cross,
        conditional_mean_gap: gap,
        consistent: is_blanket == (gap <= tol),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianCiResult {
    pub hessian_entry: f64,
    pub hessian_zero: bool,
    /// Measured departure from conditional independence.
    pub ci_gap: f64,
    pub ci_holds: bool,
    pub agree: bool,
}

/// Compare `H_{η^i μ^j} = 0` with `η^i ⊥ μ^j | rest` for a Gaussian model.
///
/// The Hessian side reads the surprisal tensor; the independence side
/// conditions on every other coordinate through the covariance.
pub fn hessian_ci_equivalence(model: &GaussianModel, i: usize, j: usize, tol: f64) -> Result<HessianCiResult> {
    let p = model.partition;
    let (eta, mu) = (p.eta(i)?, p.mu(j)?);
    let hessian = surprisal_tensor(&model.potential(), &model.mean, 2)?;
    let hessian_entry = hessian.get(&[eta, mu]);

    let rest: Vec<usize> = (0..p.n()).filter(|&c| c != eta).collect();
    let at_mean: Vec<f64> = rest.iter().map(|&c| model.mean[c]).collect();
    let shifted: Vec<f64> = rest
        .iter()
        .map(|&c| model.mean[c] + if c == mu { 1.0 } else { 0.0 })
        .collect();
    let base = conditional_mean(model, &[eta], &rest, &at_mean)?;
    let moved = conditional_mean(model, &[eta], &rest, &shifted)?;
    let ci_gap = (moved[0] - base[0]).abs();

    let hessian_zero = hessian_entry.abs() <= tol;
    let ci_holds = ci_gap <= tol;
    Ok(HessianCiResult {
        hessian_entry,
        hessian_zero,
        ci_gap,
        ci_holds,
        agree: hessian_zero == ci_holds,
    })
}
