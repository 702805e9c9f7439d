//! Resolved run configurations. A report embeds one of these verbatim, and
//! `rerun` executes it again.

use blanket_core::blanket::Thresholds;
use blanket_core::io::{GaussianDoc, SystemDoc};
use blanket_core::{EnsembleConfig, HigherOrderOptions, IntegrateOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum RunConfig {
    Validate(ValidateConfig),
    Report(ReportConfig),
    Ensemble(EnsembleRunConfig),
    Simulate(SimulateConfig),
    Ci(CiConfig),
    HigherOrder(HigherOrderConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateConfig {
    pub system: SystemDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub system: SystemDoc,
    /// Evaluation point; the potential's working point when absent.
    pub state: Option<Vec<f64>>,
    /// Entry bound; the largest observed product when absent.
    pub h: Option<f64>,
    pub thresholds: Thresholds,
    /// Zero tolerance for the per-pair Jacobian/Hessian/index checks.
    pub zero_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Chernoff,
    Chi,
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRunConfig {
    pub ensemble: EnsembleConfig,
    pub criterion: Criterion,
    /// Complement sizes `n - 1` for an additional decay scan.
    pub scan: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub system: SystemDoc,
    pub x0: Option<Vec<f64>>,
    pub integrate: IntegrateOptions,
    /// Partial-correlation tolerance of the empirical blanket test.
    pub blanket_tol: f64,
    /// Relative Frobenius tolerance against the analytic covariance.
    pub stationarity_tol: f64,
    pub write_trajectory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteTable {
    pub labels: Vec<String>,
    pub arities: Vec<usize>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CiInput {
    Gaussian {
        model: GaussianDoc,
    },
    Discrete {
        table: DiscreteTable,
        x: Vec<usize>,
        given: Vec<usize>,
        z: Vec<usize>,
        /// Also run the chained check with `z` as the external sequence.
        tower: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiConfig {
    pub input: CiInput,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HigherOrderConfig {
    pub system: SystemDoc,
    pub options: HigherOrderOptions,
}
