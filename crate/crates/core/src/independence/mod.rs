//! Conditional-independence checks.
//!
//! - [`gaussian`]: exact conditioning of Gaussian models.
//! - [`discrete`]: enumeration over small discrete joints, including the tower contraction check.
//! - [`grid`]: densities tabulated on a grid, finite-difference surprisal Hessians.
//! - [`higher_order`]: blanket checks for polynomial surprisals of degree up to four.

pub mod discrete;
pub mod gaussian;
pub mod grid;
pub mod higher_order;
mod table;

pub use discrete::{discrete_ci, tower_contraction_check, DiscreteJoint, TowerReport};
pub use gaussian::{
    blanket_certificate, conditional_mean, hessian_ci_equivalence, is_blanket, BlanketCertificate, GaussianModel,
    HessianCiResult,
};
pub use grid::{grid_hessian_ci_equivalence, GridDensity};
pub use higher_order::{higher_order_blanket_check, CiMethod, HigherOrderOptions, HigherOrderReport};
