//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the library's numerical routines; each oracle
//! recomputes its quantity from first principles.
#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exact `P(|X| > eps)` when `X` is the mean of `n_terms` Rademacher signs,
/// each independent value repeated `block` times.
///
/// The comparison uses the same float expression the sampler produces, so
/// lattice points that sit on `eps` are classified identically.
pub fn rademacher_tail(n_terms: usize, block: usize, eps: f64) -> f64 {
    assert_eq!(n_terms % block, 0);
    let m = n_terms / block;
    assert!(m <= 100);
    let mut binom = vec![1u128; m + 1];
    for b in 1..=m {
        binom[b] = binom[b - 1] * (m - b + 1) as u128 / b as u128;
    }
    let total = 2f64.powi(m as i32);
    let mut p = 0.0;
    for (b, c) in binom.iter().enumerate() {
        let sum = (block as i64 * (2 * b as i64 - m as i64)) as f64;
        let x = sum / n_terms as f64;
        if x.abs() > eps {
            p += *c as f64 / total;
        }
    }
    p
}

/// `E[x_target | x_given = values]` for `N(mean, Π⁻¹)`: marginalise the
/// remaining coordinates by a Schur complement of the precision, then read the
/// conditional mean from the marginal precision.
pub fn schur_conditional_mean(
    pi: &DMatrix<f64>,
    mean: &DVector<f64>,
    target: &[usize],
    given: &[usize],
    values: &[f64],
) -> DVector<f64> {
    let n = pi.nrows();
    let keep: Vec<usize> = target.iter().chain(given).copied().collect();
    let rest: Vec<usize> = (0..n).filter(|c| !keep.contains(c)).collect();
    let sub = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |a, b| pi[(r[a], c[b])]);
    let mut marginal = sub(&keep, &keep);
    if !rest.is_empty() {
        let rr = sub(&rest, &rest).try_inverse().expect("invertible block");
        marginal -= sub(&keep, &rest) * rr * sub(&rest, &keep);
    }
    let t = target.len();
    let paa = marginal.view((0, 0), (t, t)).into_owned();
    let pab = marginal.view((0, t), (t, given.len())).into_owned();
    let dev = DVector::from_iterator(given.len(), given.iter().zip(values).map(|(&c, v)| v - mean[c]));
    let shift = paa.try_inverse().expect("invertible target block") * pab * dev;
    DVector::from_iterator(t, target.iter().map(|&c| mean[c])) - shift
}

/// Plain monomial list: `(coef, powers)`.
#[derive(Clone, Debug)]
pub struct Poly {
    pub vars: usize,
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl Poly {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, p)| p.iter().zip(x).fold(*c, |acc, (&e, &v)| acc * v.powi(e as i32)))
            .sum()
    }

    /// Exact partial derivative in coordinate `a`.
    pub fn diff(&self, a: usize) -> Poly {
        let terms = self
            .terms
            .iter()
            .filter(|(_, p)| p[a] > 0)
            .map(|(c, p)| {
                let mut q = p.clone();
                q[a] -= 1;
                (c * p[a] as f64, q)
            })
            .collect();
        Poly { vars: self.vars, terms }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.vars).map(|a| self.diff(a).eval(x)).collect()
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.vars, self.vars, |a, b| self.diff(a).diff(b).eval(x))
    }
}

/// Skew `Q(x)` given by polynomial entries above the diagonal.
#[derive(Clone, Debug)]
pub struct PolySkew {
    pub n: usize,
    pub upper: Vec<(usize, usize, Poly)>,
}

impl PolySkew {
    pub fn value(&self, x: &[f64]) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.n, self.n);
        for (r, c, p) in &self.upper {
            let v = p.eval(x);
            q[(*r, *c)] += v;
            q[(*c, *r)] -= v;
        }
        q
    }

    pub fn derivative(&self, a: usize, x: &[f64]) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.n, self.n);
        for (r, c, p) in &self.upper {
            let v = p.diff(a).eval(x);
            q[(*r, *c)] += v;
            q[(*c, *r)] -= v;
        }
        q
    }
}

impl PolySkew {
    pub fn second_derivative(&self, a: usize, b: usize, x: &[f64]) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.n, self.n);
        for (r, c, p) in &self.upper {
            let v = p.diff(a).diff(b).eval(x);
            q[(*r, *c)] += v;
            q[(*c, *r)] -= v;
        }
        q
    }
}

/// `-(Γ - Q)∇U + ∇·(Γ - Q)` from exact polynomial derivatives.
pub fn corrected_drift(gamma: &DMatrix<f64>, q: &PolySkew, u: &Poly, x: &[f64]) -> DVector<f64> {
    let n = gamma.nrows();
    let t = gamma - q.value(x);
    let grad = DVector::from_vec(u.gradient(x));
    let mut f = -(t * grad);
    for c in 0..n {
        let dq = q.derivative(c, x);
        for i in 0..n {
            f[i] -= dq[(i, c)];
        }
    }
    f
}

/// Central-difference Jacobian `∂f_i/∂x_j`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> DVector<f64>, x: &[f64], step: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + step;
        let fp = f(&xp);
        xp[j] = x[j] - step;
        let fm = f(&xp);
        xp[j] = x[j];
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

/// Conditional-independence gap by direct enumeration over a row-major table.
///
/// Returns `max |p(x | y, z) - p(x | y)|` over outcomes with `p(y, z) > 0`.
pub fn brute_ci_gap(arities: &[usize], probs: &[f64], x: &[usize], y: &[usize], z: &[usize]) -> f64 {
    let outcomes: Vec<Vec<usize>> = arities.iter().fold(vec![vec![]], |acc, &a| {
        acc.into_iter()
            .flat_map(|o: Vec<usize>| {
                (0..a).map(move |v| {
                    let mut o = o.clone();
                    o.push(v);
                    o
                })
            })
            .collect()
    });
    assert_eq!(outcomes.len(), probs.len());
    let key = |o: &[usize], set: &[usize]| set.iter().map(|&v| o[v]).collect::<Vec<_>>();
    let marginal = |set: &[usize]| {
        let mut m: HashMap<Vec<usize>, f64> = HashMap::new();
        for (o, p) in outcomes.iter().zip(probs) {
            *m.entry(key(o, set)).or_default() += p;
        }
        m
    };
    let xy_set: Vec<usize> = x.iter().chain(y).copied().collect();
    let yz_set: Vec<usize> = y.iter().chain(z).copied().collect();
    let xyz_set: Vec<usize> = x.iter().chain(y).chain(z).copied().collect();
    let (m_y, m_xy, m_yz, m_xyz) = (marginal(y), marginal(&xy_set), marginal(&yz_set), marginal(&xyz_set));
    let mut gap = 0.0f64;
    for o in &outcomes {
        let p_yz = m_yz[&key(o, &yz_set)];
        if p_yz <= 0.0 {
            continue;
        }
        let lhs = m_xyz[&key(o, &xyz_set)] / p_yz;
        let rhs = m_xy[&key(o, &xy_set)] / m_y[&key(o, y)];
        gap = gap.max((lhs - rhs).abs());
    }
    gap
}

/// Random symmetric diagonally dominant matrix; off-diagonals in `[-scale, scale]`
/// with the given density.
pub fn random_precision(rng: &mut ChaCha8Rng, n: usize, scale: f64, density: f64) -> DMatrix<f64> {
    let mut pi = DMatrix::zeros(n, n);
    for r in 0..n {
        for c in r + 1..n {
            if rng.random::<f64>() < density {
                let v = scale * (2.0 * rng.random::<f64>() - 1.0);
                pi[(r, c)] = v;
                pi[(c, r)] = v;
            }
        }
    }
    make_dominant(&mut pi, rng);
    pi
}

/// Reset the diagonal to `0.5 + Σ|row| + U(0, 1)`.
pub fn make_dominant(pi: &mut DMatrix<f64>, rng: &mut ChaCha8Rng) {
    let n = pi.nrows();
    for r in 0..n {
        let off: f64 = (0..n).filter(|&c| c != r).map(|c| pi[(r, c)].abs()).sum();
        pi[(r, r)] = 0.5 + off + rng.random::<f64>();
    }
}

/// Random `(k, l, m)` with every block non-empty and `k + l + m = n`.
pub fn random_blocks(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize, usize) {
    assert!(n >= 3);
    let k = rng.random_range(1..=n - 2);
    let m = rng.random_range(1..=n - k - 1);
    (k, n - k - m, m)
}
