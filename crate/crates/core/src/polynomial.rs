use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single term `coef * Π x_c^{powers[c]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

impl Monomial {
    pub fn new(coef: f64, powers: Vec<u32>) -> Self {
        Monomial { coef, powers }
    }

    pub fn degree(&self) -> usize {
        self.powers.iter().map(|&p| p as usize).sum()
    }

    /// Value of `∂^{orders} m` at `x`, where `orders[c]` counts derivatives in coordinate `c`.
    fn eval_partial(&self, x: &[f64], orders: &[u32]) -> f64 {
        let mut acc = self.coef;
        for ((&p, &d), &xc) in self.powers.iter().zip(orders).zip(x) {
            if d > p {
                return 0.0;
            }
            // falling factorial p (p-1) ... (p-d+1)
            for f in (p - d + 1)..=p {
                acc *= f as f64;
            }
            let rest = p - d;
            if rest > 0 {
                acc *= xc.powi(rest as i32);
            }
        }
        acc
    }
}

/// Sparse multivariate polynomial in a fixed number of variables.
///
/// Derivatives are taken term by term, so mixed partials are symmetric by
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolynomial", into = "RawPolynomial")]
pub struct Polynomial {
    vars: usize,
    terms: Vec<Monomial>,
}

#[derive(Serialize, Deserialize)]
struct RawPolynomial {
    vars: usize,
    terms: Vec<Monomial>,
}

impl TryFrom<RawPolynomial> for Polynomial {
    type Error = Error;
    fn try_from(raw: RawPolynomial) -> Result<Self> {
        Polynomial::new(raw.vars, raw.terms)
    }
}

impl From<Polynomial> for RawPolynomial {
    fn from(p: Polynomial) -> Self {
        RawPolynomial {
            vars: p.vars,
            terms: p.terms,
        }
    }
}

impl Polynomial {
    pub fn new(vars: usize, terms: Vec<Monomial>) -> Result<Self> {
        for (idx, term) in terms.iter().enumerate() {
            if term.powers.len() != vars {
                return Err(Error::structural(
                    format!("terms[{idx}].powers"),
                    format!("expected {vars} exponents, got {}", term.powers.len()),
                ));
            }
            if !term.coef.is_finite() {
                return Err(Error::structural(
                    format!("terms[{idx}].coef"),
                    "coefficient must be finite",
                ));
            }
        }
        Ok(Polynomial { vars, terms })
    }

    pub fn zero(vars: usize) -> Self {
        Polynomial {
            vars,
            terms: Vec::new(),
        }
    }

    pub fn constant(vars: usize, c: f64) -> Self {
        Polynomial {
            vars,
            terms: vec![Monomial::new(c, vec![0; vars])],
        }
    }

    /// `c * x_a` as a polynomial.
    pub fn linear(vars: usize, a: usize, c: f64) -> Self {
        let mut powers = vec![0; vars];
        powers[a] = 1;
        Polynomial {
            vars,
            terms: vec![Monomial::new(c, powers)],
        }
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .filter(|t| t.coef != 0.0)
            .map(Monomial::degree)
            .max()
            .unwrap_or(0)
    }

    pub fn negated(&self) -> Self {
        Polynomial {
            vars: self.vars,
            terms: self
                .terms
                .iter()
                .map(|t| Monomial::new(-t.coef, t.powers.clone()))
                .collect(),
        }
    }

    pub fn add_term(&mut self, term: Monomial) -> Result<()> {
        if term.powers.len() != self.vars {
            return Err(Error::structural(
                "powers",
                format!("expected {} exponents, got {}", self.vars, term.powers.len()),
            ));
        }
        self.terms.push(term);
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.vars);
        self.terms
            .iter()
            .map(|t| {
                t.powers
                    .iter()
                    .zip(x)
                    .filter(|(&p, _)| p > 0)
                    .fold(t.coef, |acc, (&p, &xc)| acc * xc.powi(p as i32))
            })
            .sum()
    }

    /// Partial derivative along the multi-index `axes` (repetition allowed), evaluated at `x`.
    pub fn eval_derivative(&self, x: &[f64], axes: &[usize]) -> f64 {
        let mut orders = vec![0u32; self.vars];
        for &a in axes {
            orders[a] += 1;
        }
        self.eval_orders(x, &orders)
    }

    fn eval_orders(&self, x: &[f64], orders: &[u32]) -> f64 {
        debug_assert_eq!(x.len(), self.vars);
        self.terms.iter().map(|t| t.eval_partial(x, orders)).sum()
    }
}
