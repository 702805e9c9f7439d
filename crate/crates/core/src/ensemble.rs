//! Monte Carlo tail experiments for the normalised blanket index.
//!
//! One trial draws the n-1 products `Q_{η^i t} H_{t μ^j}` of a single pair and
//! records `X = Σ_t Q_{η^i t} H_{t μ^j} / (h (n-1))`. Trial `r` reads only from
//! `rng::stream(seed, n-1, r)`, so results do not depend on scheduling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blanket::{blanket_index_pair, Direction};
use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::partition::PartitionSpec;
use crate::potential::Potential;
use crate::rng;
use crate::system::DiffusionSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryLaw {
    /// `±h` with equal probability.
    Rademacher,
    /// Uniform on `[-h, h]`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Sample the products directly.
    #[default]
    Products,
    /// Sample a skew Q and a symmetric H and evaluate the pair index on the assembled system.
    Matrices,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub partition: PartitionSpec,
    pub h: f64,
    pub law: EntryLaw,
    #[serde(default)]
    pub sparsity: f64,
    /// Dependence cover χ; 1 means fully independent terms.
    #[serde(default = "one")]
    pub chi: usize,
    pub trials: usize,
    pub epsilon_grid: Vec<f64>,
    pub seed: u64,
    /// Normalised correction Φ′ shared by every term.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinear_phi: Option<f64>,
    /// Block-local (i, j) of the monitored pair.
    #[serde(default)]
    pub pair: (usize, usize),
    #[serde(default)]
    pub mode: SamplingMode,
}

fn one() -> usize {
    1
}

impl EnsembleConfig {
    /// Products-mode config with independent terms and no offset.
    pub fn new(partition: PartitionSpec, h: f64, law: EntryLaw, trials: usize, epsilon_grid: Vec<f64>, seed: u64) -> Self {
        EnsembleConfig {
            partition,
            h,
            law,
            sparsity: 0.0,
            chi: 1,
            trials,
            epsilon_grid,
            seed,
            nonlinear_phi: None,
            pair: (0, 0),
            mode: SamplingMode::Products,
        }
    }

    /// Size of the index complement, n - 1.
    pub fn complement(&self) -> usize {
        self.partition.n() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Configuration(msg));
        if !(self.h.is_finite() && self.h > 0.0) {
            return bad(format!("h must be finite and positive, got {}", self.h));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return bad(format!("sparsity must lie in [0, 1], got {}", self.sparsity));
        }
        if self.chi == 0 {
            return bad("chi must be at least 1".into());
        }
        if !self.complement().is_multiple_of(self.chi) {
            return bad(format!("chi = {} does not divide n - 1 = {}", self.chi, self.complement()));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.epsilon_grid.is_empty() {
            return bad("epsilon_grid is empty".into());
        }
        if let Some(e) = self.epsilon_grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return bad(format!("every epsilon must be finite and positive, got {e}"));
        }
        if let Some(phi) = self.nonlinear_phi {
            if !(phi.is_finite() && phi.abs() <= 1.0) {
                return bad(format!("nonlinear_phi must be finite with |Φ′| ≤ 1, got {phi}"));
            }
        }
        self.partition.eta(self.pair.0)?;
        self.partition.mu(self.pair.1)?;
        if self.mode == SamplingMode::Matrices && (self.chi != 1 || self.nonlinear_phi.is_some()) {
            return bad("matrices mode supports only chi = 1 without a nonlinear offset".into());
        }
        Ok(())
    }
}

/// One row of a tail report: a single ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub n: usize,
    pub epsilon: f64,
    pub exceedances: u64,
    pub frequency: f64,
    /// `2 exp(-(n-1) ε² / 2)`.
    pub chernoff_bound: f64,
    /// `2 exp(-(n-1) ε² / (2χ))`.
    pub chi_bound: f64,
    /// `2 k m exp(-(n-1) ε² / 2)`; informative only when below 1.
    pub union_bound: f64,
    pub union_informative: bool,
    /// Sum of the two one-sided terms around Φ′.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonlinear_bound: Option<f64>,
    /// Raw-correction predicate `n - 1 + ε ≤ Φ ≤ h`, reported only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_hypothesis: Option<bool>,
    /// The bound the flag is checked against.
    pub bound: f64,
    pub bound_satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub n: usize,
    pub trials: usize,
    /// Deviation centre: Φ′ for nonlinear runs, otherwise 0.
    pub center: f64,
    /// `Φ = Φ′ h (n - 1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_raw: Option<f64>,
    pub mean_x: f64,
    pub median_abs_dev: f64,
    pub max_abs_dev: f64,
    pub rows: Vec<TailRow>,
    pub all_satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub n: usize,
    pub median_abs_x: f64,
    pub max_abs_x: f64,
    pub frequencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
    pub epsilon_grid: Vec<f64>,
    pub rows: Vec<DecayRow>,
}

#[derive(Clone, Copy)]
enum Criterion {
    Chernoff,
    Chi,
    Nonlinear,
}

fn draw(law: EntryLaw, h: f64, sparsity: f64, rng: &mut ChaCha8Rng) -> f64 {
    if sparsity > 0.0 && rng.random::<f64>() < sparsity {
        return 0.0;
    }
    match law {
        EntryLaw::Rademacher => {
            if rng.random::<bool>() {
                h
            } else {
                -h
            }
        }
        EntryLaw::Uniform => h * (2.0 * rng.random::<f64>() - 1.0),
    }
}

fn fill_independent(config: &EnsembleConfig, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let h = config.h;
    if config.law == EntryLaw::Rademacher && config.sparsity == 0.0 {
        for chunk in out.chunks_mut(64) {
            let bits = rng.next_u64();
            for (b, v) in chunk.iter_mut().enumerate() {
                *v = if bits >> b & 1 == 1 { h } else { -h };
            }
        }
    } else if config.sparsity >= 1.0 {
        out.fill(0.0);
    } else {
        for v in out.iter_mut() {
            *v = draw(config.law, h, config.sparsity, rng);
        }
    }
}

/// The n-1 products of one trial.
///
/// With χ > 1, (n-1)/χ independent values are each repeated χ times. A
/// nonlinear offset turns each term into `Φ′ h + (1 - |Φ′|) ξ`, so terms stay
/// in `[-h, h]` with mean `Φ′ h`.
pub fn sample_pair_terms(config: &EnsembleConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = config.complement();
    let chi = config.chi.max(1);
    let mut base = vec![0.0; len / chi];
    fill_independent(config, rng, &mut base);
    let mut terms: Vec<f64> = base.iter().flat_map(|&v| std::iter::repeat_n(v, chi)).collect();
    if let Some(phi) = config.nonlinear_phi {
        let scale = 1.0 - phi.abs();
        for v in terms.iter_mut() {
            *v = phi * config.h + scale * *v;
        }
    }
    terms
}

fn sample_matrices_x(config: &EnsembleConfig, rng: &mut ChaCha8Rng) -> Result<f64> {
    let p = config.partition;
    let n = p.n();
    let root = config.h.sqrt();
    let mut q = DMatrix::zeros(n, n);
    let mut hess = DMatrix::from_diagonal_element(n, n, root);
    for r in 0..n {
        for c in r + 1..n {
            let v = draw(config.law, root, config.sparsity, rng);
            q[(r, c)] = v;
            q[(c, r)] = -v;
            let w = draw(config.law, root, 0.0, rng);
            hess[(r, c)] = w;
            hess[(c, r)] = w;
        }
    }
    let sys = DiffusionSystem::new(
        p,
        DMatrix::identity(n, n),
        Coupling::Constant(q),
        Potential::centered(hess)?,
    )?;
    let idx = blanket_index_pair(&sys, config.pair.0, config.pair.1, Direction::EtaToMu, &DVector::zeros(n))?;
    Ok(idx / (config.h * (n - 1) as f64))
}

/// Normalised index of every trial, in trial order.
fn sample_x(config: &EnsembleConfig) -> Result<Vec<f64>> {
    let complement = config.complement();
    let norm = config.h * complement as f64;
    (0..config.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng::stream(config.seed, complement as u64, trial);
            match config.mode {
                SamplingMode::Products => Ok(sample_pair_terms(config, &mut rng).iter().sum::<f64>() / norm),
                SamplingMode::Matrices => sample_matrices_x(config, &mut rng),
            }
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let len = values.len();
    if len % 2 == 1 {
        values[len / 2]
    } else {
        0.5 * (values[len / 2 - 1] + values[len / 2])
    }
}

fn chernoff(complement: usize, eps: f64, chi: usize) -> f64 {
    2.0 * (-(complement as f64) * eps * eps / (2.0 * chi as f64)).exp()
}

/// `e^{-(n-1)(Φ′+ε)²/2} + e^{-(n-1)(Φ′-ε)²/2}`.
pub fn nonlinear_bound(complement: usize, phi: f64, eps: f64) -> f64 {
    let c = complement as f64;
    (-c * (phi + eps).powi(2) / 2.0).exp() + (-c * (phi - eps).powi(2) / 2.0).exp()
}

fn run(config: &EnsembleConfig, criterion: Criterion) -> Result<TailReport> {
    config.validate()?;
    let xs = sample_x(config)?;
    let complement = config.complement();
    let n = complement + 1;
    let center = config.nonlinear_phi.unwrap_or(0.0);
    let mut dev: Vec<f64> = xs.iter().map(|x| (x - center).abs()).collect();
    let km = (config.partition.k() * config.partition.m()) as f64;

    let rows: Vec<TailRow> = config
        .epsilon_grid
        .iter()
        .map(|&eps| {
            let exceedances = dev.iter().filter(|d| **d > eps).count() as u64;
            let frequency = exceedances as f64 / config.trials as f64;
            let chernoff_bound = chernoff(complement, eps, 1);
            let chi_bound = chernoff(complement, eps, config.chi);
            let union_bound = km * chernoff_bound;
            let nl = config.nonlinear_phi.map(|phi| nonlinear_bound(complement, phi, eps));
            let raw_hypothesis = config.nonlinear_phi.map(|phi| {
                let raw = phi * config.h * complement as f64;
                complement as f64 + eps <= raw && raw <= config.h
            });
            let bound = match criterion {
                Criterion::Chernoff => chernoff_bound,
                Criterion::Chi => chi_bound,
                Criterion::Nonlinear => nl.unwrap_or(chernoff_bound),
            };
            TailRow {
                n,
                epsilon: eps,
                exceedances,
                frequency,
                chernoff_bound,
                chi_bound,
                union_bound,
                union_informative: union_bound < 1.0,
                nonlinear_bound: nl,
                raw_hypothesis,
                bound,
                bound_satisfied: frequency <= bound,
            }
        })
        .collect();

    let mean_x = xs.iter().sum::<f64>() / xs.len() as f64;
    let max_abs_dev = dev.iter().copied().fold(0.0, f64::max);
    let median_abs_dev = median(&mut dev);
    Ok(TailReport {
        n,
        trials: config.trials,
        center,
        phi_raw: config.nonlinear_phi.map(|phi| phi * config.h * complement as f64),
        mean_x,
        median_abs_dev,
        max_abs_dev,
        all_satisfied: rows.iter().all(|r| r.bound_satisfied),
        rows,
    })
}

/// Exceedance frequencies of `|X|` against the two-sided Chernoff bound.
pub fn run_tail_experiment(config: &EnsembleConfig) -> Result<TailReport> {
    run(config, Criterion::Chernoff)
}

/// As [`run_tail_experiment`], with flags checked against the χ-adjusted bound.
pub fn run_dependent_tail_experiment(config: &EnsembleConfig) -> Result<TailReport> {
    run(config, Criterion::Chi)
}

/// Exceedance of `|X - Φ′|` against the summed one-sided terms.
pub fn run_nonlinear_tail_experiment(config: &EnsembleConfig) -> Result<TailReport> {
    if config.nonlinear_phi.is_none() {
        return Err(Error::Configuration("nonlinear experiment needs nonlinear_phi".into()));
    }
    run(config, Criterion::Nonlinear)
}

/// Median and tail frequencies of `|X|` for each complement size in `complements`.
///
/// Each size reuses the config with the blanket block resized so that
/// `n - 1` equals the requested value.
pub fn decay_scan(config: &EnsembleConfig, complements: &[usize]) -> Result<DecayTable> {
    if complements.is_empty() {
        return Err(Error::Configuration("decay scan needs at least one size".into()));
    }
    if complements.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Configuration("decay scan sizes must be strictly ascending".into()));
    }
    let (k, m) = (config.partition.k(), config.partition.m());
    let mut rows = Vec::with_capacity(complements.len());
    for &c in complements {
        let l = (c + 1).checked_sub(k + m).filter(|l| *l >= 1).ok_or_else(|| {
            Error::Configuration(format!("n - 1 = {c} leaves no blanket coordinate for k = {k}, m = {m}"))
        })?;
        let mut cfg = config.clone();
        cfg.partition = PartitionSpec::new(k, l, m)?;
        cfg.nonlinear_phi = None;
        let report = run(&cfg, Criterion::Chernoff)?;
        rows.push(DecayRow {
            n: report.n,
            median_abs_x: report.median_abs_dev,
            max_abs_x: report.max_abs_dev,
            frequencies: report.rows.iter().map(|r| r.frequency).collect(),
        });
    }
    Ok(DecayTable {
        epsilon_grid: config.epsilon_grid.clone(),
        rows,
    })
}
