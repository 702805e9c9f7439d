//! Euler–Maruyama integration and stationary statistics.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::partition::PartitionSpec;
use crate::potential::Potential;
use crate::rng;
use crate::system::{min_eigenvalue, stationary_drift, DiffusionSystem, StateVector};

/// States beyond this norm abort the run.
pub const BLOW_UP_NORM: f64 = 1e8;

const SIM_DOMAIN: u64 = 0x5de;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    /// Defaults to 10% of `steps`.
    #[serde(default)]
    pub burn_in: Option<usize>,
    /// Disable the noise term (deterministic gradient flow).
    #[serde(default)]
    pub zero_noise: bool,
}

impl IntegrateOptions {
    pub fn new(dt: f64, steps: usize, seed: u64) -> Self {
        IntegrateOptions {
            dt,
            steps,
            seed,
            burn_in: None,
            zero_noise: false,
        }
    }

    pub fn resolved_burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.steps / 10)
    }
}

/// Integrated path; `steps + 1` states including the initial one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub seed: u64,
    pub burn_in: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    /// Build from row-major states; used for externally produced samples.
    pub fn from_states(dt: f64, seed: u64, burn_in: usize, states: &[Vec<f64>]) -> Result<Self> {
        let dim = states.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::structural("states", "no states"));
        }
        let mut data = Vec::with_capacity(dim * states.len());
        for (r, s) in states.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::structural("states", format!("row {r} has {} entries, expected {dim}", s.len())));
            }
            if let Some(c) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    quantity: "state",
                    index: r * dim + c,
                });
            }
            data.extend_from_slice(s);
        }
        Ok(Trajectory {
            dt,
            seed,
            burn_in,
            dim,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn state(&self, s: usize) -> &[f64] {
        &self.data[s * self.dim..(s + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// `Γ^{1/2}`, exact for diagonal `Γ`.
fn sqrt_gamma(gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = gamma.nrows();
    let min = min_eigenvalue(gamma);
    if min.is_nan() || min <= 0.0 {
        return Err(Error::Degenerate {
            what: "gamma",
            detail: format!("not positive definite (min eigenvalue {min})"),
        });
    }
    let diagonal = (0..n).all(|r| (0..n).all(|c| r == c || gamma[(r, c)] == 0.0));
    if diagonal {
        return Ok(DMatrix::from_diagonal(&gamma.diagonal().map(f64::sqrt)));
    }
    let eig = gamma.clone().symmetric_eigen();
    let root = eig.eigenvalues.map(f64::sqrt);
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose())
}

enum DriftEval<'a> {
    /// `A (x - m)` with `A = -(Γ - Q) Π`.
    Linear { a: DMatrix<f64>, mean: DVector<f64> },
    General(&'a DiffusionSystem),
}

impl DriftEval<'_> {
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            DriftEval::Linear { a, mean } => Ok(a * (x - mean)),
            DriftEval::General(sys) => stationary_drift(sys, x),
        }
    }
}

fn drift_eval(sys: &DiffusionSystem) -> DriftEval<'_> {
    match (sys.coupling(), sys.potential()) {
        (Coupling::Constant(q), Potential::Quadratic { precision, mean }) => DriftEval::Linear {
            a: -((sys.gamma() - q) * precision),
            mean: mean.clone(),
        },
        _ => DriftEval::General(sys),
    }
}

/// `x_{s+1} = x_s + f(x_s) dt + √(2 dt) Γ^{1/2} ξ_s` with the stationary drift `f`.
pub fn integrate(sys: &DiffusionSystem, x0: &StateVector, dt: f64, steps: usize, seed: u64) -> Result<Trajectory> {
    integrate_with(sys, x0, &IntegrateOptions::new(dt, steps, seed))
}

pub fn integrate_with(sys: &DiffusionSystem, x0: &StateVector, opts: &IntegrateOptions) -> Result<Trajectory> {
    let n = sys.dim();
    if x0.len() != n {
        return Err(Error::structural("x0", format!("length {} for a {n}-dimensional system", x0.len())));
    }
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(Error::Configuration(format!("dt must be finite and positive, got {}", opts.dt)));
    }
    if opts.steps == 0 {
        return Err(Error::Configuration("steps must be at least 1".into()));
    }
    let burn_in = opts.resolved_burn_in();
    if burn_in + 1 > opts.steps {
        return Err(Error::Configuration(format!(
            "burn_in {burn_in} leaves fewer than 2 states out of {}",
            opts.steps + 1
        )));
    }
    let root = sqrt_gamma(sys.gamma())?.scale((2.0 * opts.dt).sqrt());
    let f = drift_eval(sys);
    let mut rng = rng::stream(opts.seed, SIM_DOMAIN, 0);

    let mut data = Vec::with_capacity(n * (opts.steps + 1));
    let mut x: DVector<f64> = (**x0).clone();
    let mut xi = DVector::zeros(n);
    data.extend(x.iter());
    for step in 1..=opts.steps {
        let mut next = &x + f.eval(&x)? * opts.dt;
        if !opts.zero_noise {
            xi.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
            next.gemv(1.0, &root, &xi, 1.0);
        }
        let norm = next.norm();
        if norm.is_nan() || norm > BLOW_UP_NORM {
            return Err(Error::BlowUp { step, norm });
        }
        data.extend(next.iter());
        x = next;
    }
    Ok(Trajectory {
        dt: opts.dt,
        seed: opts.seed,
        burn_in,
        dim: n,
        data,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Smallest per-coordinate batch-means effective sample size.
    pub effective_samples: f64,
    pub samples: usize,
}

fn post_burn_in(traj: &Trajectory, burn_in: usize) -> Result<&[f64]> {
    let len = traj.len();
    if len <= burn_in + 1 {
        return Err(Error::InsufficientSamples {
            have: len.saturating_sub(burn_in),
            need: 2,
        });
    }
    Ok(&traj.data[burn_in * traj.dim..])
}

/// Sample mean and covariance (divisor N - 1) after discarding `burn_in` states.
pub fn empirical_moments(traj: &Trajectory, burn_in: usize) -> Result<Moments> {
    let data = post_burn_in(traj, burn_in)?;
    let n = traj.dim;
    let count = data.len() / n;
    let mut mean = DVector::zeros(n);
    for s in data.chunks_exact(n) {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean /= count as f64;
    let mut cov = DMatrix::zeros(n, n);
    let mut d = vec![0.0; n];
    for s in data.chunks_exact(n) {
        for c in 0..n {
            d[c] = s[c] - mean[c];
        }
        for r in 0..n {
            for c in r..n {
                cov[(r, c)] += d[r] * d[c];
            }
        }
    }
    for r in 0..n {
        for c in r..n {
            cov[(r, c)] /= (count - 1) as f64;
            cov[(c, r)] = cov[(r, c)];
        }
    }
    let effective_samples = (0..n)
        .map(|c| batch_means_ess(data, n, c, mean[c], cov[(c, c)]))
        .fold(f64::INFINITY, f64::min);
    Ok(Moments {
        mean,
        covariance: cov,
        effective_samples,
        samples: count,
    })
}

fn batch_means_ess(data: &[f64], stride: usize, coord: usize, mean: f64, var: f64) -> f64 {
    let count = data.len() / stride;
    let size = (count as f64).sqrt().floor() as usize;
    let batches = count / size.max(1);
    if var <= 0.0 || batches < 2 {
        return count as f64;
    }
    let mut spread = 0.0;
    for b in 0..batches {
        let m: f64 = (b * size..(b + 1) * size).map(|s| data[s * stride + coord]).sum::<f64>() / size as f64;
        spread += (m - mean).powi(2);
    }
    let tau = size as f64 * spread / (batches - 1) as f64 / var;
    (count as f64 / tau.max(1.0)).clamp(1.0, count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBlanketTest {
    /// `partial_correlations[i][j]` for (η^i, μ^j) given every blanket coordinate.
    pub partial_correlations: Vec<Vec<f64>>,
    pub max_abs: f64,
    pub tol: f64,
    pub blanket_plausible: bool,
}

/// Partial correlation of every (η^i, μ^j) given b, from post-burn-in samples.
pub fn empirical_blanket_test(traj: &Trajectory, partition: &PartitionSpec, tol: f64) -> Result<EmpiricalBlanketTest> {
    if partition.n() != traj.dim {
        return Err(Error::structural(
            "partition",
            format!("{} coordinates for a {}-dimensional trajectory", partition.n(), traj.dim),
        ));
    }
    let cov = empirical_moments(traj, traj.burn_in)?.covariance;
    let blanket: Vec<usize> = partition.blanket().collect();
    let sbb = cov.select_rows(&blanket).select_columns(&blanket);
    if sbb.cholesky().is_none() {
        return Err(Error::Degenerate {
            what: "blanket covariance",
            detail: "sample covariance of b is singular; cannot condition".into(),
        });
    }
    let mut table = Vec::with_capacity(partition.k());
    for eta in partition.internal() {
        let mut row = Vec::with_capacity(partition.m());
        for mu in partition.external() {
            let mut idx = vec![eta, mu];
            idx.extend(&blanket);
            let sub = cov.select_rows(&idx).select_columns(&idx);
            let p = sub.cholesky().map(|c| c.inverse()).ok_or_else(|| Error::Degenerate {
                what: "pair covariance",
                detail: format!("sample covariance of ({eta}, {mu}, b) is singular"),
            })?;
            row.push(-p[(0, 1)] / (p[(0, 0)] * p[(1, 1)]).sqrt());
        }
        table.push(row);
    }
    let max_abs = table.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(EmpiricalBlanketTest {
        partial_correlations: table,
        max_abs,
        tol,
        blanket_plausible: max_abs <= tol,
    })
}
