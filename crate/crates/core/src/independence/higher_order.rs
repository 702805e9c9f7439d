//! Blanket checks for surprisals of degree ν ≤ 4.
//!
//! For an internal coordinate η^i and ν-1 external coordinates μ^1 … μ^{ν-1},
//! the report lists the ν-1 Hessian elements `∂_{η^i μ^s} U` at the working
//! point and the ν-tensor entry `∂_{η^i μ^1 … μ^{ν-1}} U`, then decides the
//! joint statement `η^i ⊥ {μ^s} | rest` either exactly (quadratic surprisal,
//! Gaussian conditioning) or on a grid of `exp(-U)` conditioned on every
//! remaining coordinate.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gaussian::{hessian_ci_equivalence, GaussianModel};
use super::grid::GridAxis;
use crate::error::{Error, Result};
use crate::partition::PartitionSpec;
use crate::potential::{Potential, MAX_DEGREE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HigherOrderOptions {
    /// Block-local index of the internal coordinate.
    pub eta: usize,
    /// Block-local external indices; defaults to the first ν-1.
    pub externals: Option<Vec<usize>>,
    /// Tensor order ν; defaults to the potential's degree (at least 2).
    pub order: Option<usize>,
    /// Working point; defaults to the potential's mean or the origin.
    pub point: Option<Vec<f64>>,
    pub hessian_tol: f64,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    pub ci_tol: f64,
    pub max_cells: u64,
}

impl Default for HigherOrderOptions {
    fn default() -> Self {
        HigherOrderOptions {
            eta: 0,
            externals: None,
            order: None,
            point: None,
            hessian_tol: 1e-12,
            grid_lo: -5.0,
            grid_hi: 5.0,
            grid_points: 41,
            ci_tol: 1e-3,
            max_cells: 300_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Gaussian,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HigherOrderReport {
    pub order: usize,
    /// Global coordinate of η^i.
    pub eta: usize,
    /// Global coordinates of the selected μ's.
    pub externals: Vec<usize>,
    pub point: Vec<f64>,
    pub hessian_elements: Vec<f64>,
    pub all_hessian_zero: bool,
    /// `∂_{η^i μ^1 … μ^{ν-1}} U` at the working point.
    pub tensor_entry: f64,
    pub ci_method: CiMethod,
    pub ci_gap: f64,
    pub joint_ci_holds: bool,
    /// Hessian zeros and joint independence give the same answer.
    pub consistent: bool,
}

/// Evaluate the ν-1 designated Hessian elements and the joint independence they are meant to certify.
pub fn higher_order_blanket_check(
    potential: &Potential,
    partition: &PartitionSpec,
    options: &HigherOrderOptions,
) -> Result<HigherOrderReport> {
    if potential.dim() != partition.n() {
        return Err(Error::structural(
            "potential",
            format!("{} coordinates for a partition of {}", potential.dim(), partition.n()),
        ));
    }
    let degree = potential.degree();
    if degree > MAX_DEGREE {
        return Err(Error::UnsupportedDegree(degree));
    }
    let order = options.order.unwrap_or(degree).max(2);
    if order > MAX_DEGREE {
        return Err(Error::UnsupportedDegree(order));
    }
    let needed = order - 1;
    if partition.m() < needed || partition.k() < needed {
        return Err(Error::Configuration(format!(
            "order {order} needs k, m ≥ {needed}; partition has k = {}, m = {}",
            partition.k(),
            partition.m()
        )));
    }
    let eta = partition.eta(options.eta)?;
    let local_externals = options.externals.clone().unwrap_or_else(|| (0..needed).collect());
    if local_externals.len() != needed {
        return Err(Error::Configuration(format!(
            "order {order} needs exactly {needed} external coordinates, got {}",
            local_externals.len()
        )));
    }
    let externals = local_externals
        .iter()
        .map(|&j| partition.mu(j))
        .collect::<Result<Vec<_>>>()?;
    let mut dedup = externals.clone();
    dedup.sort_unstable();
    dedup.dedup();
    if dedup.len() != externals.len() {
        return Err(Error::Configuration("external coordinates must be distinct".into()));
    }

    let point = match &options.point {
        Some(p) if p.len() == partition.n() => DVector::from_vec(p.clone()),
        Some(p) => {
            return Err(Error::structural(
                "point",
                format!("length {} for {} coordinates", p.len(), partition.n()),
            ))
        }
        None => potential.working_point(),
    };

    let hessian_elements: Vec<f64> = externals.iter().map(|&mu| potential.partial(&point, &[eta, mu])).collect();
    let all_hessian_zero = hessian_elements.iter().all(|h| h.abs() <= options.hessian_tol);
    let mut axes = vec![eta];
    axes.extend(&externals);
    let tensor_entry = potential.partial(&point, &axes);

    let (ci_method, ci_gap) = match potential {
        Potential::Quadratic { .. } => {
            let model = GaussianModel::from_potential(potential, *partition)?;
            let mut gap = 0.0f64;
            for &j in &local_externals {
                gap = gap.max(hessian_ci_equivalence(&model, options.eta, j, options.hessian_tol)?.ci_gap);
            }
            (CiMethod::Gaussian, gap)
        }
        Potential::Polynomial(_) => (CiMethod::Grid, grid_conditional_gap(potential, eta, &externals, options)?),
    };
    let tol = match ci_method {
        CiMethod::Gaussian => options.hessian_tol,
        CiMethod::Grid => options.ci_tol,
    };
    let joint_ci_holds = ci_gap <= tol;
    Ok(HigherOrderReport {
        order,
        eta,
        externals,
        point: point.iter().copied().collect(),
        hessian_elements,
        all_hessian_zero,
        tensor_entry,
        ci_method,
        ci_gap,
        joint_ci_holds,
        consistent: all_hessian_zero == joint_ci_holds,
    })
}

/// Largest `|p(η | μ's, rest) - p(η | rest)|` over the grid.
///
/// For each configuration of the remaining coordinates the slice over
/// `(η, μ's)` is tabulated and normalised separately, so memory stays at one
/// slice per worker.
fn grid_conditional_gap(
    potential: &Potential,
    eta: usize,
    externals: &[usize],
    options: &HigherOrderOptions,
) -> Result<f64> {
    let n = potential.dim();
    let points = options.grid_points;
    if points < 2 {
        return Err(Error::Configuration("grid needs at least 2 points per axis".into()));
    }
    let cells = (points as u64).checked_pow(n as u32).unwrap_or(u64::MAX);
    if cells > options.max_cells {
        return Err(Error::Configuration(format!(
            "{points}^{n} = {cells} grid cells exceeds the limit of {}",
            options.max_cells
        )));
    }
    let axis = GridAxis::span(options.grid_lo, options.grid_hi, points);
    let rest: Vec<usize> = (0..n).filter(|c| *c != eta && !externals.contains(c)).collect();
    let rest_cells = points.pow(rest.len() as u32);
    let mu_cells = points.pow(externals.len() as u32);

    let gap = (0..rest_cells)
        .into_par_iter()
        .map(|rest_slot| {
            let mut x = vec![0.0; n];
            let mut rem = rest_slot;
            for &c in rest.iter().rev() {
                x[c] = axis.node(rem % points);
                rem /= points;
            }
            // log-weights over (η, μ's), η slowest
            let mut slice = vec![0.0; points * mu_cells];
            for (e, row) in slice.chunks_exact_mut(mu_cells).enumerate() {
                x[eta] = axis.node(e);
                for (slot, cell) in row.iter_mut().enumerate() {
                    let mut rem = slot;
                    for &c in externals.iter().rev() {
                        x[c] = axis.node(rem % points);
                        rem /= points;
                    }
                    *cell = -value_at(potential, &x);
                }
            }
            let top = slice.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            slice.iter_mut().for_each(|v| *v = (*v - top).exp());

            let total: f64 = slice.iter().sum();
            let mut p_mu = vec![0.0; mu_cells];
            for row in slice.chunks_exact(mu_cells) {
                for (acc, v) in p_mu.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            let mut gap = 0.0f64;
            for row in slice.chunks_exact(mu_cells) {
                let p_eta = row.iter().sum::<f64>() / total;
                for (v, &pm) in row.iter().zip(&p_mu) {
                    if pm > 0.0 {
                        gap = gap.max((v / pm - p_eta).abs());
                    }
                }
            }
            gap
        })
        .reduce(|| 0.0, f64::max);
    Ok(gap)
}

fn value_at(potential: &Potential, x: &[f64]) -> f64 {
    match potential {
        Potential::Polynomial(p) => p.eval(x),
        Potential::Quadratic { precision, mean } => {
            let n = x.len();
            let mut acc = 0.0;
            for a in 0..n {
                let da = x[a] - mean[a];
                for b in 0..n {
                    acc += da * precision[(a, b)] * (x[b] - mean[b]);
                }
            }
            0.5 * acc
        }
    }
}
