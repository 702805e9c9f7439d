//! Numerical laboratory for partitioned stationary diffusions
//!
//! ```text
//! dx = -(Γ - Q(x)) ∇U(x) dt + √(2Γ) dW
//! ```
//!
//! with the state split into internal (η), blanket (b) and external (μ)
//! coordinates. The crate computes flow Jacobians and Markov-blanket indices,
//! checks conditional-independence claims exactly (Gaussian conditioning,
//! discrete enumeration, grid marginalisation) and by simulation, and runs
//! seeded Monte Carlo experiments on the concentration of the normalised
//! blanket index.
//!
//! Modules:
//! - [`system`]: systems, drift, validation.
//! - [`potential`]: quadratic and polynomial surprisals and their derivative tensors.
//! - [`blanket`]: Jacobians, pair / total / normalised indices, verdicts.
//! - [`independence`]: Gaussian and discrete conditional independence.
//! - [`ensemble`]: tail-frequency experiments against Chernoff-type bounds.
//! - [`sim`]: Euler–Maruyama integration and empirical moments.
//! - [`rng`]: counter-based random streams.
//! - [`io`]: JSON documents for systems, models and experiment configs.

pub mod blanket;
pub mod coupling;
pub mod ensemble;
pub mod error;
pub mod independence;
pub mod io;
pub mod partition;
pub mod polynomial;
pub mod potential;
pub mod rng;
pub mod sim;
pub mod system;

pub use blanket::{
    blanket_index_pair, blanket_index_total, flow_jacobian, heins_dacosta_check, normalized_index, BlanketReport,
    Direction, JacobianMatrix, Thresholds, Verdict,
};
pub use coupling::{Coupling, CouplingField, PolynomialCoupling};
pub use error::{Error, Result};
pub use partition::{Block, PartitionSpec};
pub use polynomial::{Monomial, Polynomial};
pub use potential::{surprisal_tensor, Potential, SymmetricTensor};
pub use system::{drift, stationary_drift, validate_system, DiffusionSystem, StateVector, ValidationReport};
pub use ensemble::{
    decay_scan, run_dependent_tail_experiment, run_nonlinear_tail_experiment, run_tail_experiment, sample_pair_terms,
    DecayTable, EnsembleConfig, EntryLaw, SamplingMode, TailReport, TailRow,
};
pub use independence::{higher_order_blanket_check, CiMethod, HigherOrderOptions, HigherOrderReport};
pub use sim::{empirical_blanket_test, empirical_moments, integrate, integrate_with, IntegrateOptions, Moments, Trajectory};
