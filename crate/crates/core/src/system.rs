use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::partition::PartitionSpec;
use crate::potential::Potential;

/// Tolerance for the symmetry / skew-symmetry invariants.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A point in state space. Entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(DVector<f64>);

impl StateVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                quantity: "state",
                index,
            });
        }
        Ok(StateVector(values))
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        Self::new(DVector::from_vec(values))
    }

    pub fn zeros(n: usize) -> Self {
        StateVector(DVector::zeros(n))
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for StateVector {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// `dx = -(Γ - Q(x)) ∇U(x) dt + √(2Γ) dW`, with the diffusion fixed to `D = Γ`.
#[derive(Debug, Clone)]
pub struct DiffusionSystem {
    partition: Option<PartitionSpec>,
    gamma: DMatrix<f64>,
    coupling: Coupling,
    potential: Potential,
}

impl DiffusionSystem {
    pub fn new(partition: PartitionSpec, gamma: DMatrix<f64>, coupling: Coupling, potential: Potential) -> Result<Self> {
        let n = partition.n();
        check_shapes(n, &gamma, &coupling, &potential)?;
        Ok(DiffusionSystem {
            partition: Some(partition),
            gamma,
            coupling,
            potential,
        })
    }

    /// A system with no η/b/μ labelling, e.g. a one- or two-dimensional diffusion.
    pub fn unpartitioned(gamma: DMatrix<f64>, coupling: Coupling, potential: Potential) -> Result<Self> {
        let n = gamma.nrows();
        if n == 0 {
            return Err(Error::structural("gamma", "empty matrix"));
        }
        check_shapes(n, &gamma, &coupling, &potential)?;
        Ok(DiffusionSystem {
            partition: None,
            gamma,
            coupling,
            potential,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn partition(&self) -> Result<&PartitionSpec> {
        self.partition.as_ref().ok_or(Error::MissingPartition)
    }

    pub fn partition_opt(&self) -> Option<&PartitionSpec> {
        self.partition.as_ref()
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// Replace the potential, keeping Γ, Q and the partition.
    pub fn with_potential(&self, potential: Potential) -> Result<Self> {
        check_shapes(self.dim(), &self.gamma, &self.coupling, &potential)?;
        Ok(DiffusionSystem {
            potential,
            ..self.clone()
        })
    }

    pub fn with_coupling(&self, coupling: Coupling) -> Result<Self> {
        check_shapes(self.dim(), &self.gamma, &coupling, &self.potential)?;
        Ok(DiffusionSystem {
            coupling,
            ..self.clone()
        })
    }

    /// `T(x) = Γ - Q(x)`.
    pub fn flow_operator(&self, x: &DVector<f64>) -> DMatrix<f64> {
        &self.gamma - self.coupling.value(x)
    }

    /// Default evaluation point: the potential's working point (mean or origin).
    pub fn working_point(&self) -> StateVector {
        StateVector(self.potential.working_point())
    }
}

fn check_shapes(n: usize, gamma: &DMatrix<f64>, coupling: &Coupling, potential: &Potential) -> Result<()> {
    if gamma.shape() != (n, n) {
        return Err(Error::structural(
            "gamma",
            format!("expected {n}x{n}, got {}x{}", gamma.nrows(), gamma.ncols()),
        ));
    }
    let (qr, qc) = coupling.dim();
    if (qr, qc) != (n, n) {
        return Err(Error::structural("q", format!("expected {n}x{n}, got {qr}x{qc}")));
    }
    if potential.dim() != n {
        return Err(Error::structural(
            "potential",
            format!("potential has {} coordinates, system has {n}", potential.dim()),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    /// Measured quantity: a violation magnitude, or the minimum eigenvalue for definiteness checks.
    pub measured: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<InvariantCheck>,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Points at which state-dependent invariants are probed.
pub(crate) fn probe_points(sys: &DiffusionSystem) -> Vec<DVector<f64>> {
    let n = sys.dim();
    let mut points = vec![sys.potential.working_point(), DVector::zeros(n)];
    if sys.coupling.is_constant() {
        return points;
    }
    points.push(DVector::from_element(n, 1.0));
    points.push(DVector::from_element(n, -1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..8 {
        points.push(DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)));
    }
    points
}

/// Check every invariant of the system and report each with its measured value.
///
/// Shape mismatches are caught at construction; the report covers numeric invariants.
pub fn validate_system(sys: &DiffusionSystem) -> ValidationReport {
    let mut checks = Vec::new();
    let gamma = &sys.gamma;

    let finite = gamma.iter().all(|v| v.is_finite());
    checks.push(InvariantCheck {
        name: "gamma_finite".into(),
        passed: finite,
        measured: if finite { 0.0 } else { f64::NAN },
    });

    let asym = max_abs(&(gamma - gamma.transpose()));
    checks.push(InvariantCheck {
        name: "gamma_symmetric".into(),
        passed: asym <= SYMMETRY_TOL,
        measured: asym,
    });

    let min_eig = if finite { min_eigenvalue(gamma) } else { f64::NAN };
    checks.push(InvariantCheck {
        name: "gamma_positive_definite".into(),
        passed: min_eig > 0.0,
        measured: min_eig,
    });

    let mut skew = 0.0f64;
    for x in probe_points(sys) {
        let q = sys.coupling.value(&x);
        let v = max_abs(&(&q + q.transpose()));
        skew = if v.is_nan() { f64::NAN } else { skew.max(v) };
    }
    checks.push(InvariantCheck {
        name: "q_skew_symmetric".into(),
        passed: skew <= SYMMETRY_TOL,
        measured: skew,
    });

    match &sys.potential {
        Potential::Quadratic { precision, mean } => {
            let finite = precision.iter().chain(mean.iter()).all(|v| v.is_finite());
            let asym = max_abs(&(precision - precision.transpose()));
            checks.push(InvariantCheck {
                name: "precision_symmetric".into(),
                passed: finite && asym <= SYMMETRY_TOL,
                measured: asym,
            });
            let min_eig = if finite { min_eigenvalue(precision) } else { f64::NAN };
            checks.push(InvariantCheck {
                name: "precision_positive_definite".into(),
                passed: min_eig > 0.0,
                measured: min_eig,
            });
        }
        Potential::Polynomial(p) => {
            let degree = p.degree();
            checks.push(InvariantCheck {
                name: "potential_degree".into(),
                passed: degree <= crate::potential::MAX_DEGREE,
                measured: degree as f64,
            });
        }
    }

    let passed = checks.iter().all(|c| c.passed);
    ValidationReport { passed, checks }
}

fn check_state(sys: &DiffusionSystem, x: &DVector<f64>) -> Result<()> {
    if x.len() != sys.dim() {
        return Err(Error::structural(
            "x",
            format!("state has length {}, system has {}", x.len(), sys.dim()),
        ));
    }
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            quantity: "state",
            index,
        });
    }
    Ok(())
}

/// `-(Γ - Q(x)) ∇U(x)`.
pub fn drift(sys: &DiffusionSystem, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_state(sys, x)?;
    let grad = sys.potential.gradient(x);
    if let Some(index) = grad.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            quantity: "gradient",
            index,
        });
    }
    Ok(-(sys.flow_operator(x) * grad))
}

/// `(∇·T)_i = Σ_t ∂_t T_{it}(x)`; zero for constant couplings.
pub fn flow_divergence(sys: &DiffusionSystem, x: &DVector<f64>) -> Result<DVector<f64>> {
    let n = sys.dim();
    let mut div = DVector::zeros(n);
    if sys.coupling.is_constant() {
        return Ok(div);
    }
    for t in 0..n {
        let dq = sys.coupling.derivative(x, t)?;
        for i in 0..n {
            div[i] -= dq[(i, t)];
        }
    }
    Ok(div)
}

/// Drift that keeps `exp(-U)` stationary when `Q` depends on the state:
/// `-(Γ - Q)∇U + ∇·T`. Identical to [`drift`] for constant `Q`.
pub fn stationary_drift(sys: &DiffusionSystem, x: &DVector<f64>) -> Result<DVector<f64>> {
    let base = drift(sys, x)?;
    Ok(base + flow_divergence(sys, x)?)
}
