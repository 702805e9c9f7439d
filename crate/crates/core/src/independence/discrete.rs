use serde::{Deserialize, Serialize};

use super::table::{ci_gap, marginalize};
use crate::error::{Error, Result};

/// Allowed deviation of the total mass from one.
const MASS_TOL: f64 = 1e-12;

/// Joint pmf over a few small discrete variables, stored row-major (last variable fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    arities: Vec<usize>,
    probs: Vec<f64>,
    labels: Vec<String>,
}

impl DiscreteJoint {
    pub fn new(arities: Vec<usize>, probs: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if arities.is_empty() {
            return Err(Error::structural("arities", "no variables"));
        }
        if let Some((v, a)) = arities.iter().enumerate().find(|(_, &a)| !(2..=3).contains(&a)) {
            return Err(Error::structural(
                format!("arities[{v}]"),
                format!("arity {a} outside 2..=3"),
            ));
        }
        let cells: usize = arities.iter().product();
        if probs.len() != cells {
            return Err(Error::structural(
                "probs",
                format!("{} entries for {cells} outcomes", probs.len()),
            ));
        }
        if labels.len() != arities.len() {
            return Err(Error::structural(
                "labels",
                format!("{} labels for {} variables", labels.len(), arities.len()),
            ));
        }
        if let Some(idx) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::structural(
                format!("probs[{idx}]"),
                "probabilities must be finite and non-negative",
            ));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::structural("probs", format!("total mass {mass} is not 1")));
        }
        Ok(DiscreteJoint { arities, probs, labels })
    }

    /// Variables labelled `x0, x1, ...`.
    pub fn unlabelled(arities: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let labels = (0..arities.len()).map(|v| format!("x{v}")).collect();
        Self::new(arities, probs, labels)
    }

    /// Normalise non-negative weights into a joint.
    pub fn from_weights(arities: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::structural("probs", "weights must have positive finite total"));
        }
        let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        // absorb the rounding residue so the mass check sees exactly one
        let residue = 1.0 - probs.iter().sum::<f64>();
        if let Some(max) = probs
            .iter_mut()
            .max_by(|a, b| a.partial_cmp(b).expect("finite weights"))
        {
            *max += residue;
        }
        Self::unlabelled(arities, probs)
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vars(&self) -> usize {
        self.arities.len()
    }

    /// Marginal pmf of the listed variables, in the listed order.
    pub fn marginal(&self, vars: &[usize]) -> Vec<f64> {
        marginalize(&self.probs, &self.arities, vars)
    }

    fn check_sets(&self, sets: &[&[usize]]) -> Result<()> {
        let mut seen = vec![false; self.vars()];
        for set in sets {
            for &v in *set {
                if v >= self.vars() {
                    return Err(Error::Index(format!("variable {v} out of 0..{}", self.vars())));
                }
                if seen[v] {
                    return Err(Error::Configuration(format!("variable {v} appears in more than one set")));
                }
                seen[v] = true;
            }
        }
        Ok(())
    }

    /// `max |p(x | y, z) - p(x | y)|` over outcomes with `p(y, z) > 0`.
    pub fn ci_gap(&self, x: &[usize], y: &[usize], z: &[usize]) -> Result<f64> {
        self.check_sets(&[x, y, z])?;
        if x.is_empty() || z.is_empty() {
            return Err(Error::Configuration("X and Z must be non-empty".into()));
        }
        Ok(ci_gap(&self.probs, &self.arities, x, y, z))
    }
}

/// `X ⊥ Z | Y` by exhaustive enumeration; zero-probability conditioning events are skipped.
pub fn discrete_ci(p: &DiscreteJoint, x: &[usize], y: &[usize], z: &[usize], tol: f64) -> Result<bool> {
    Ok(p.ci_gap(x, y, z)? <= tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerReport {
    /// Level `s` holds `η ⊥ μ^s | b, μ^{s+1}, …, μ^{ν-1}`.
    pub hypotheses: Vec<bool>,
    pub hypothesis_gaps: Vec<f64>,
    /// `η ⊥ {μ^1, …, μ^{ν-1}} | b` at the accumulated tolerance `(ν-1)·tol`.
    pub conclusion_holds: bool,
    pub conclusion_gap: f64,
    pub conclusion_tol: f64,
    /// `¬(all hypotheses) ∨ conclusion`.
    pub lemma_respected: bool,
}

/// Check the chained conditional independences and their joint conclusion.
///
/// Each hypothesis is checked at `tol`; the conclusion inherits at most the
/// sum of the per-level deviations, so it is checked at `(ν-1)·tol`.
pub fn tower_contraction_check(
    p: &DiscreteJoint,
    eta: &[usize],
    blanket: &[usize],
    externals: &[usize],
    tol: f64,
) -> Result<TowerReport> {
    if externals.is_empty() || externals.len() > 4 {
        return Err(Error::Configuration(format!(
            "tower needs between 1 and 4 external variables, got {}",
            externals.len()
        )));
    }
    p.check_sets(&[eta, blanket, externals])?;

    let mut hypotheses = Vec::with_capacity(externals.len());
    let mut hypothesis_gaps = Vec::with_capacity(externals.len());
    for s in 0..externals.len() {
        let given: Vec<usize> = blanket.iter().chain(&externals[s + 1..]).copied().collect();
        let gap = p.ci_gap(eta, &given, &externals[s..=s])?;
        hypothesis_gaps.push(gap);
        hypotheses.push(gap <= tol);
    }
    let conclusion_tol = tol * externals.len() as f64;
    let conclusion_gap = p.ci_gap(eta, blanket, externals)?;
    let conclusion_holds = conclusion_gap <= conclusion_tol;
    let lemma_respected = !hypotheses.iter().all(|&h| h) || conclusion_holds;
    Ok(TowerReport {
        hypotheses,
        hypothesis_gaps,
        conclusion_holds,
        conclusion_gap,
        conclusion_tol,
        lemma_respected,
    })
}
