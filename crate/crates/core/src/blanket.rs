//! Flow Jacobians and blanket indices.
//!
//! For `T = Γ - Q(x)` the Jacobian of the (negated, divergence-corrected) flow is
//!
//! ```text
//! J_ij = Σ_t T_it H_tj + Σ_t ∂_j T_it ∂_t U - Σ_t ∂_j ∂_t T_it
//! ```
//!
//! and the blanket index of an (η^i, μ^j) pair is `Σ_{t≠i} Q_it H_tj - Φ_ij`,
//! where `Φ_ij = Σ_t ∂_j T_it ∂_t U - Σ_t ∂_j ∂_t T_it` vanishes for constant `T`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::PartitionSpec;
use crate::system::DiffusionSystem;

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix {
    pub entries: DMatrix<f64>,
    pub partition: Option<PartitionSpec>,
}

impl JacobianMatrix {
    /// Entry `J_{η^i μ^j}` (block-local indices).
    pub fn eta_mu(&self, i: usize, j: usize) -> Result<f64> {
        let p = self.partition.as_ref().ok_or(Error::MissingPartition)?;
        Ok(self.entries[(p.eta(i)?, p.mu(j)?)])
    }

    pub fn mu_eta(&self, j: usize, i: usize) -> Result<f64> {
        let p = self.partition.as_ref().ok_or(Error::MissingPartition)?;
        Ok(self.entries[(p.mu(j)?, p.eta(i)?)])
    }
}

/// `Φ` as a full `n × n` matrix at `x`; identically zero for constant couplings.
pub fn nonlinear_correction(sys: &DiffusionSystem, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = sys.dim();
    let mut phi = DMatrix::zeros(n, n);
    if sys.coupling().is_constant() {
        return Ok(phi);
    }
    let grad = sys.potential().gradient(x);
    for j in 0..n {
        // ∂_j T = -∂_j Q
        let dq = sys.coupling().derivative(x, j)?;
        let column = -(dq * &grad);
        for i in 0..n {
            phi[(i, j)] += column[i];
        }
        for t in 0..n {
            // -Σ_t ∂_j ∂_t T_it = Σ_t ∂_j ∂_t Q_it
            let ddq = sys.coupling().second_derivative(x, j, t)?;
            for i in 0..n {
                phi[(i, j)] += ddq[(i, t)];
            }
        }
    }
    Ok(phi)
}

/// Flow Jacobian at `x`; reduces to `T·H` when `T` is constant.
pub fn flow_jacobian(sys: &DiffusionSystem, x: &DVector<f64>) -> Result<JacobianMatrix> {
    if x.len() != sys.dim() {
        return Err(Error::structural(
            "x",
            format!("state has length {}, system has {}", x.len(), sys.dim()),
        ));
    }
    let t = sys.flow_operator(x);
    let h = sys.potential().hessian(x);
    let entries = t * h + nonlinear_correction(sys, x)?;
    Ok(JacobianMatrix {
        entries,
        partition: sys.partition_opt().copied(),
    })
}

/// Direction of the Jacobian entry whose blanket index is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `J_{η^i μ^j}`: `Σ_{t≠η^i} Q_{η^i t} H_{t μ^j} - Φ_{η^i μ^j}`.
    EtaToMu,
    /// `J_{μ^j η^i}`: `Σ_{t≠μ^j} H_{η^i t} Q_{t μ^j} + Φ_{μ^j η^i}`.
    MuToEta,
}

/// Everything that goes into one pair index at one state.
struct PairContext {
    q: DMatrix<f64>,
    h: DMatrix<f64>,
    phi: DMatrix<f64>,
}

impl PairContext {
    fn at(sys: &DiffusionSystem, x: &DVector<f64>) -> Result<Self> {
        Ok(PairContext {
            q: sys.coupling().value(x),
            h: sys.potential().hessian(x),
            phi: nonlinear_correction(sys, x)?,
        })
    }

    /// `Σ_{t≠a} Q_{a t} H_{t c}` in global coordinates.
    fn qh(&self, a: usize, c: usize) -> f64 {
        (0..self.q.nrows())
            .filter(|&t| t != a)
            .map(|t| self.q[(a, t)] * self.h[(t, c)])
            .sum()
    }

    /// `Σ_{t≠c} H_{a t} Q_{t c}` in global coordinates.
    fn hq(&self, a: usize, c: usize) -> f64 {
        (0..self.q.nrows())
            .filter(|&t| t != c)
            .map(|t| self.h[(a, t)] * self.q[(t, c)])
            .sum()
    }
}

/// Blanket index of one (η^i, μ^j) pair at `x`; `i`, `j` are block-local.
pub fn blanket_index_pair(
    sys: &DiffusionSystem,
    i: usize,
    j: usize,
    direction: Direction,
    x: &DVector<f64>,
) -> Result<f64> {
    let p = sys.partition()?;
    let (eta, mu) = (p.eta(i)?, p.mu(j)?);
    let ctx = PairContext::at(sys, x)?;
    Ok(match direction {
        Direction::EtaToMu => ctx.qh(eta, mu) - ctx.phi[(eta, mu)],
        Direction::MuToEta => ctx.hq(eta, mu) + ctx.phi[(mu, eta)],
    })
}

/// `Ind(J)`: the sum of the η→μ linear pair indices `Σ_{t≠i} Q_it H_tj`.
pub fn blanket_index_total(sys: &DiffusionSystem, x: &DVector<f64>) -> Result<f64> {
    let p = *sys.partition()?;
    let ctx = PairContext::at(sys, x)?;
    Ok(p.internal()
        .flat_map(|eta| p.external().map(move |mu| (eta, mu)))
        .map(|(eta, mu)| ctx.qh(eta, mu))
        .sum())
}

/// `Ind_max = k m h (n - 1)`.
pub fn ind_max(partition: &PartitionSpec, h: f64) -> f64 {
    (partition.k() * partition.m()) as f64 * h * (partition.n() - 1) as f64
}

/// Thresholds that turn an index table into a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Every |pair index| at or below this gives a strict blanket.
    pub tol_strict: f64,
    /// Pairs with |X_ij| at or below this count towards a weak blanket.
    pub tol_weak: f64,
    /// Minimum fraction of such pairs for a weak blanket.
    pub weak_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            tol_strict: 1e-10,
            tol_weak: 0.05,
            weak_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Strict,
    Weak { fraction: f64 },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlanketReport {
    pub state: Vec<f64>,
    /// `k × m` table of `Σ_{t≠i} Q_{η^i t} H_{t μ^j}`.
    pub pair_indices: Vec<Vec<f64>>,
    /// `m × k` table of the μ→η indices.
    pub reverse_indices: Vec<Vec<f64>>,
    /// `k × m` table of `Φ_{η^i μ^j}`.
    pub phi: Vec<Vec<f64>>,
    /// `k × m` table of `pair - Φ`, the index the verdict is based on.
    pub effective_indices: Vec<Vec<f64>>,
    pub total_index: f64,
    pub effective_total: f64,
    pub h: f64,
    pub h_supplied: bool,
    pub ind_max: f64,
    pub normalized_total: f64,
    /// `k × m` table of `pair / (h (n - 1))`.
    pub normalized_pairs: Vec<Vec<f64>>,
    /// Fraction of pairs with `|effective| / (h (n - 1)) <= tol_weak`.
    pub weak_fraction_observed: f64,
    pub thresholds: Thresholds,
    pub verdict: Verdict,
}

/// Full blanket report at `x`.
///
/// With `h = None` the bound is the largest observed `|Q_{η^i t} H_{t μ^j}|`
/// (or 1 when every product vanishes); a supplied `h` must bound every product.
pub fn normalized_index(
    sys: &DiffusionSystem,
    x: &DVector<f64>,
    h: Option<f64>,
    thresholds: Thresholds,
) -> Result<BlanketReport> {
    let p = *sys.partition()?;
    let n = p.n();
    let ctx = PairContext::at(sys, x)?;

    let pairs: Vec<(usize, usize)> = p
        .internal()
        .flat_map(|eta| p.external().map(move |mu| (eta, mu)))
        .collect();

    // Largest product, with its location, over every pair and complement index.
    let (max_product, worst) = pairs
        .par_iter()
        .map(|&(eta, mu)| {
            let mut best = (0.0f64, (eta, eta, mu));
            for t in (0..n).filter(|&t| t != eta) {
                let v = (ctx.q[(eta, t)] * ctx.h[(t, mu)]).abs();
                if v > best.0 {
                    best = (v, (eta, t, mu));
                }
            }
            best
        })
        .reduce(|| (0.0, (0, 0, 0)), |a, b| if b.0 > a.0 { b } else { a });

    let (h, h_supplied) = match h {
        Some(h) => {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Configuration(format!("entry bound h must be positive, got {h}")));
            }
            if max_product > h {
                let (i, t, j) = worst;
                return Err(Error::BoundViolation {
                    i,
                    t,
                    j,
                    value: ctx.q[(i, t)] * ctx.h[(t, j)],
                    h,
                });
            }
            (h, true)
        }
        None if max_product > 0.0 => (max_product, false),
        None => (1.0, false),
    };

    let scale = h * (n - 1) as f64;
    let table = |f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
        p.internal()
            .map(|eta| p.external().map(|mu| f(eta, mu)).collect())
            .collect()
    };
    let pair_indices = table(&|eta, mu| ctx.qh(eta, mu));
    let phi = table(&|eta, mu| ctx.phi[(eta, mu)]);
    let effective_indices = table(&|eta, mu| ctx.qh(eta, mu) - ctx.phi[(eta, mu)]);
    let normalized_pairs: Vec<Vec<f64>> = pair_indices
        .iter()
        .map(|row| row.iter().map(|v| v / scale).collect())
        .collect();
    let reverse_indices = p
        .external()
        .map(|mu| p.internal().map(|eta| ctx.hq(eta, mu) + ctx.phi[(mu, eta)]).collect())
        .collect();

    let total_index: f64 = pair_indices.iter().flatten().sum();
    let effective_total: f64 = effective_indices.iter().flatten().sum();
    let ind_max = ind_max(&p, h);

    let count = pairs.len() as f64;
    let weak_hits = effective_indices
        .iter()
        .flatten()
        .filter(|v| (*v / scale).abs() <= thresholds.tol_weak)
        .count() as f64;
    let weak_fraction_observed = weak_hits / count;
    let verdict = if effective_indices
        .iter()
        .flatten()
        .all(|v| v.abs() <= thresholds.tol_strict)
    {
        Verdict::Strict
    } else if weak_fraction_observed >= thresholds.weak_fraction {
        Verdict::Weak {
            fraction: weak_fraction_observed,
        }
    } else {
        Verdict::None
    };

    Ok(BlanketReport {
        state: x.iter().copied().collect(),
        pair_indices,
        reverse_indices,
        phi,
        effective_indices,
        total_index,
        effective_total,
        h,
        h_supplied,
        ind_max,
        normalized_total: total_index / ind_max,
        normalized_pairs,
        weak_fraction_observed,
        thresholds,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeinsDaCostaCheck {
    pub jacobian_entry: f64,
    pub hessian_entry: f64,
    pub index: f64,
    /// `H_{η^i μ^j}` recovered from `(J - Σ_{t≠i} T_it H_tj - Φ_ij) / T_ii`.
    pub reconstructed_hessian: f64,
    pub jacobian_entry_zero: bool,
    pub hessian_zero: bool,
    pub index_zero: bool,
    /// When the Jacobian entry vanishes, the Hessian entry and the index vanish together.
    pub equivalence_holds: bool,
}

/// Test the "zero Jacobian entry ⇒ (zero Hessian entry ⇔ zero blanket index)" equivalence for one pair.
pub fn heins_dacosta_check(
    sys: &DiffusionSystem,
    i: usize,
    j: usize,
    x: &DVector<f64>,
    tol: f64,
) -> Result<HeinsDaCostaCheck> {
    let p = sys.partition()?;
    let (eta, mu) = (p.eta(i)?, p.mu(j)?);
    let t = sys.flow_operator(x);
    let t_ii = t[(eta, eta)];
    if t_ii.abs() <= tol {
        return Err(Error::Degenerate {
            what: "flow operator",
            detail: format!("diagonal entry T[{eta}][{eta}] = {t_ii} vanishes"),
        });
    }
    let ctx = PairContext::at(sys, x)?;
    let jac = flow_jacobian(sys, x)?;
    let jacobian_entry = jac.entries[(eta, mu)];
    let hessian_entry = ctx.h[(eta, mu)];
    let index = ctx.qh(eta, mu) - ctx.phi[(eta, mu)];

    let off_diagonal: f64 = (0..sys.dim())
        .filter(|&s| s != eta)
        .map(|s| t[(eta, s)] * ctx.h[(s, mu)])
        .sum();
    let reconstructed_hessian = (jacobian_entry - off_diagonal - ctx.phi[(eta, mu)]) / t_ii;

    let jacobian_entry_zero = jacobian_entry.abs() <= tol;
    let hessian_zero = hessian_entry.abs() <= tol;
    let index_zero = index.abs() <= tol;
    Ok(HeinsDaCostaCheck {
        jacobian_entry,
        hessian_entry,
        index,
        reconstructed_hessian,
        jacobian_entry_zero,
        hessian_zero,
        index_zero,
        equivalence_holds: !jacobian_entry_zero || hessian_zero == index_zero,
    })
}
