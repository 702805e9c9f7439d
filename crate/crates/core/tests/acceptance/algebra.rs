use blanket_core::blanket::{blanket_index_pair, flow_jacobian, heins_dacosta_check, Direction};
use blanket_core::independence::{blanket_certificate, is_blanket, GaussianModel};
use blanket_core::{Coupling, DiffusionSystem, Monomial, PartitionSpec, Polynomial, PolynomialCoupling, Potential};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::common::{self, Poly, PolySkew};
use crate::Outcome;

pub fn zero_jacobian_equivalence() -> Outcome {
    let mut rng = common::rng(0xacc1);
    let (mut agree, mut zero_cases, mut worst_jac, mut worst_index) = (0, 0, 0.0f64, 0.0f64);
    let mut first_failure = None;
    for case in 0..1000 {
        let n = rng.random_range(3..=12);
        let (k, l, m) = common::random_blocks(&mut rng, n);
        let part = PartitionSpec::new(k, l, m).unwrap();
        let (i, j) = (rng.random_range(0..k), rng.random_range(0..m));
        let (eta, mu) = (i, k + l + j);

        let gamma = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0)));
        let mut q = DMatrix::zeros(n, n);
        for r in 0..n {
            for c in r + 1..n {
                if rng.random::<f64>() < 0.7 {
                    let v = rng.random_range(-1.0..1.0);
                    q[(r, c)] = v;
                    q[(c, r)] = -v;
                }
            }
        }
        let mut pi = common::random_precision(&mut rng, n, 0.3, 0.5);
        let zero = case % 2 == 0;
        let h = if zero {
            0.0
        } else {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * rng.random_range(0.05..0.3)
        };
        pi[(eta, mu)] = h;
        pi[(mu, eta)] = h;
        common::make_dominant(&mut pi, &mut rng);
        // choose Q[η][μ] so that Γ_ηη H_ημ = Σ_{t≠η} Q_ηt H_tμ, i.e. J_ημ = 0
        let rest: f64 = (0..n)
            .filter(|&t| t != eta && t != mu)
            .map(|t| q[(eta, t)] * pi[(t, mu)])
            .sum();
        let q_em = (gamma[(eta, eta)] * h - rest) / pi[(mu, mu)];
        q[(eta, mu)] = q_em;
        q[(mu, eta)] = -q_em;

        let sys = DiffusionSystem::new(part, gamma.clone(), Coupling::Constant(q.clone()), Potential::centered(pi.clone()).unwrap())
            .unwrap();
        let x = DVector::zeros(n);
        let jac = flow_jacobian(&sys, &x).unwrap().entries[(eta, mu)];
        let index = blanket_index_pair(&sys, i, j, Direction::EtaToMu, &x).unwrap();
        let hess = sys.potential().hessian(&x)[(eta, mu)];
        let oracle_index: f64 = (0..n).filter(|&t| t != eta).map(|t| q[(eta, t)] * pi[(t, mu)]).sum();
        let check = heins_dacosta_check(&sys, i, j, &x, 1e-10).unwrap();

        worst_jac = worst_jac.max(jac.abs());
        worst_index = worst_index
            .max((index - oracle_index).abs())
            .max((index - gamma[(eta, eta)] * h).abs());
        let ok = ((hess.abs() <= 1e-10) == (index.abs() <= 1e-10))
            && check.jacobian_entry_zero
            && check.equivalence_holds
            && (check.reconstructed_hessian - h).abs() <= 1e-12
            && (hess.abs() <= 1e-10) == zero;
        if ok {
            agree += 1;
        } else if first_failure.is_none() {
            first_failure = Some(format!("case {case}: H = {hess:e}, index = {index:e}"));
        }
        zero_cases += zero as usize;
    }
    let pass = agree == 1000 && worst_jac <= 1e-10 && worst_index <= 1e-12;
    Outcome::new(
        pass,
        format!(
            "{agree}/1000 agree ({zero_cases} with H = 0), max |J| = {worst_jac:.1e}, max index error vs oracle = {worst_index:.1e}{}",
            first_failure.map(|f| format!(", first failure {f}")).unwrap_or_default()
        ),
    )
}

type Terms = Vec<(f64, Vec<u32>)>;

/// A polynomial system kept in plain form so it can be rebuilt for both the library and the oracle.
#[derive(Clone)]
struct PolyCase {
    part: PartitionSpec,
    gamma: DMatrix<f64>,
    q_upper: Vec<(usize, usize, Terms)>,
    u: Terms,
}

fn unit(n: usize, axes: &[usize]) -> Vec<u32> {
    let mut p = vec![0; n];
    for &a in axes {
        p[a] += 1;
    }
    p
}

fn random_powers(rng: &mut ChaCha8Rng, n: usize, degree: usize) -> Vec<u32> {
    let axes: Vec<usize> = (0..degree).map(|_| rng.random_range(0..n)).collect();
    unit(n, &axes)
}

impl PolyCase {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(3..=6);
        let (k, l, m) = common::random_blocks(rng, n);
        let gamma = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0)));
        let mut q_upper = Vec::new();
        for r in 0..n {
            for c in r + 1..n {
                if rng.random::<f64>() >= 0.6 {
                    continue;
                }
                let mut terms = vec![(rng.random_range(-1.0..1.0), vec![0; n])];
                for a in 0..n {
                    if rng.random::<f64>() < 0.3 {
                        terms.push((rng.random_range(-0.5..0.5), unit(n, &[a])));
                    }
                }
                for _ in 0..rng.random_range(1..=2) {
                    terms.push((rng.random_range(-0.3..0.3), random_powers(rng, n, 2)));
                }
                q_upper.push((r, c, terms));
            }
        }
        let pi = common::random_precision(rng, n, 0.4, 0.6);
        let mut u = Vec::new();
        for a in 0..n {
            for b in a..n {
                let coef = if a == b { 0.5 * pi[(a, a)] } else { pi[(a, b)] };
                if coef != 0.0 {
                    u.push((coef, unit(n, &[a, b])));
                }
            }
            u.push((0.05, unit(n, &[a, a, a, a])));
        }
        for _ in 0..2 {
            u.push((rng.random_range(-0.3..0.3), random_powers(rng, n, 3)));
        }
        u.push((rng.random_range(-0.1..0.1), random_powers(rng, n, 4)));
        PolyCase {
            part: PartitionSpec::new(k, l, m).unwrap(),
            gamma,
            q_upper,
            u,
        }
    }

    fn n(&self) -> usize {
        self.part.n()
    }

    fn library(&self) -> DiffusionSystem {
        let n = self.n();
        let mono = |t: &Terms| Polynomial::new(n, t.iter().map(|(c, p)| Monomial::new(*c, p.clone())).collect()).unwrap();
        let entries = self.q_upper.iter().map(|(r, c, t)| (*r, *c, mono(t))).collect();
        DiffusionSystem::new(
            self.part,
            self.gamma.clone(),
            Coupling::Polynomial(PolynomialCoupling::new(n, entries).unwrap()),
            Potential::polynomial(mono(&self.u)).unwrap(),
        )
        .unwrap()
    }

    fn oracle(&self) -> (PolySkew, Poly) {
        let n = self.n();
        let upper = self
            .q_upper
            .iter()
            .map(|(r, c, t)| (*r, *c, Poly { vars: n, terms: t.clone() }))
            .collect();
        (PolySkew { n, upper }, Poly { vars: n, terms: self.u.clone() })
    }

    fn with_u_term(&self, coef: f64, powers: Vec<u32>) -> Self {
        let mut s = self.clone();
        s.u.push((coef, powers));
        s
    }

    /// Add `c` to `Q[row][col]` (and `-c` to its mirror).
    fn with_q_constant(&self, row: usize, col: usize, c: f64) -> Self {
        let mut s = self.clone();
        let (r, k, v) = if row < col { (row, col, c) } else { (col, row, -c) };
        let zeros = vec![0; s.n()];
        match s.q_upper.iter_mut().find(|(a, b, _)| (*a, *b) == (r, k)) {
            Some((_, _, terms)) => terms.push((v, zeros)),
            None => s.q_upper.push((r, k, vec![(v, zeros)])),
        }
        s
    }

    fn jacobian_entry(&self, x: &DVector<f64>, eta: usize, mu: usize) -> f64 {
        flow_jacobian(&self.library(), x).unwrap().entries[(eta, mu)]
    }
}

/// Relative error between the library Jacobian and `-∂f/∂x` of the oracle drift.
fn fd_relative_error(case: &PolyCase, x: &[f64]) -> f64 {
    let (skew, u) = case.oracle();
    let fd = -common::fd_jacobian(|y| common::corrected_drift(&case.gamma, &skew, &u, y), x, 1e-5);
    let lib = flow_jacobian(&case.library(), &DVector::from_column_slice(x)).unwrap().entries;
    (&lib - &fd).amax() / fd.amax().max(1.0)
}

/// `Σ_{t≠η} Q_ηt H_tμ - Φ_ημ` from the oracle's exact derivatives.
fn oracle_nonlinear_index(case: &PolyCase, x: &[f64], eta: usize, mu: usize) -> f64 {
    let (skew, u) = case.oracle();
    let n = case.n();
    let q = skew.value(x);
    let h = u.hessian(x);
    let grad = u.gradient(x);
    let dq = skew.derivative(mu, x);
    let pair: f64 = (0..n).filter(|&t| t != eta).map(|t| q[(eta, t)] * h[(t, mu)]).sum();
    // Φ with T = Γ - Q and constant Γ
    let mut phi = 0.0;
    for t in 0..n {
        phi += -dq[(eta, t)] * grad[t];
        phi -= -skew.second_derivative(mu, t, x)[(eta, t)];
    }
    pair - phi
}

pub fn nonlinear_identity() -> Outcome {
    let mut rng = common::rng(0xacc5);
    let (mut worst_fd, mut worst_oracle, mut worst_j) = (0.0f64, 0.0f64, 0.0f64);
    let (mut equiv_ok, mut equiv_total, mut zero_h) = (0, 0, 0);
    for _ in 0..100 {
        let case = PolyCase::random(&mut rng);
        let n = case.n();
        let probes: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        for x in &probes {
            worst_fd = worst_fd.max(fd_relative_error(&case, x));
        }

        let p = case.part;
        let x = &probes[0];
        let xv = DVector::from_column_slice(x);
        // pair whose Jacobian entry responds to an added η μ term
        let mut chosen = None;
        for _ in 0..20 {
            let (i, j) = (rng.random_range(0..p.k()), rng.random_range(0..p.m()));
            let (eta, mu) = (p.eta(i).unwrap(), p.mu(j).unwrap());
            let j0 = case.jacobian_entry(&xv, eta, mu);
            let j1 = case.with_u_term(1.0, unit(n, &[eta, mu])).jacobian_entry(&xv, eta, mu);
            if (j1 - j0).abs() > 0.1 {
                chosen = Some((i, j, eta, mu, j0, j1));
                break;
            }
        }
        let Some((i, j, eta, mu, j0, j1)) = chosen else {
            return Outcome::new(false, "could not find a responsive pair");
        };

        // H ≠ 0 variant: cancel J_ημ through the η μ coefficient of U
        let nonzero = case.with_u_term(-j0 / (j1 - j0), unit(n, &[eta, mu]));

        // H = 0 variant: cancel H_ημ, then cancel J_ημ through a constant in Q[η][t0]
        let h0 = case.oracle().1.hessian(x)[(eta, mu)];
        let flat = case.with_u_term(-h0, unit(n, &[eta, mu]));
        let h_flat = flat.oracle().1.hessian(x);
        let t0 = (0..n)
            .filter(|&t| t != eta)
            .max_by(|&a, &b| h_flat[(a, mu)].abs().total_cmp(&h_flat[(b, mu)].abs()))
            .unwrap();
        let k0 = flat.jacobian_entry(&xv, eta, mu);
        let k1 = flat.with_q_constant(eta, t0, 1.0).jacobian_entry(&xv, eta, mu);
        let zeroed = flat.with_q_constant(eta, t0, -k0 / (k1 - k0));

        for variant in [&nonzero, &zeroed] {
            let sys = variant.library();
            let jac = flow_jacobian(&sys, &xv).unwrap().entries;
            let scale = jac.amax().max(1.0);
            worst_j = worst_j.max(jac[(eta, mu)].abs() / scale);
            worst_fd = worst_fd.max(fd_relative_error(variant, x));
            let hess = sys.potential().hessian(&xv)[(eta, mu)];
            let index = blanket_index_pair(&sys, i, j, Direction::EtaToMu, &xv).unwrap();
            worst_oracle = worst_oracle.max((index - oracle_nonlinear_index(variant, x, eta, mu)).abs() / scale);
            equiv_total += 1;
            if (hess.abs() <= 1e-8) == (index.abs() <= 1e-8) {
                equiv_ok += 1;
            }
            zero_h += (hess.abs() <= 1e-8) as usize;
        }
    }
    let pass = worst_fd <= 1e-6 && equiv_ok == equiv_total && worst_j <= 1e-10 && worst_oracle <= 1e-9;
    Outcome::new(
        pass,
        format!(
            "max FD relative error {worst_fd:.1e}; equivalence {equiv_ok}/{equiv_total} ({zero_h} with H = 0); max forced |J| {worst_j:.1e}; index vs oracle {worst_oracle:.1e}"
        ),
    )
}

pub fn gaussian_blanket() -> Outcome {
    let mut rng = common::rng(0xacc6);
    let mut worst_zero = 0.0f64;
    let mut all_blanket = true;
    for _ in 0..200 {
        let n = rng.random_range(3..=8);
        let (k, l, m) = common::random_blocks(&mut rng, n);
        let part = PartitionSpec::new(k, l, m).unwrap();
        let mut pi = common::random_precision(&mut rng, n, 0.5, 0.8);
        for eta in part.internal() {
            for mu in part.external() {
                pi[(eta, mu)] = 0.0;
                pi[(mu, eta)] = 0.0;
            }
        }
        common::make_dominant(&mut pi, &mut rng);
        let mean = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let model = GaussianModel::new(pi.clone(), mean.clone(), part).unwrap();
        let cert = blanket_certificate(&model, 1e-12).unwrap();
        all_blanket &= is_blanket(&model, 1e-12) && cert.is_blanket && cert.consistent;
        worst_zero = worst_zero.max(cert.conditional_mean_gap);

        // oracle: shift each μ^j by one with b at its mean
        let eta: Vec<usize> = part.internal().collect();
        let b: Vec<usize> = part.blanket().collect();
        let b_mu: Vec<usize> = part.blanket().chain(part.external()).collect();
        let base = common::schur_conditional_mean(&pi, &mean, &eta, &b, &b.iter().map(|&c| mean[c]).collect::<Vec<_>>());
        for mu in part.external() {
            let values: Vec<f64> = b_mu.iter().map(|&c| mean[c] + if c == mu { 1.0 } else { 0.0 }).collect();
            let moved = common::schur_conditional_mean(&pi, &mean, &eta, &b_mu, &values);
            worst_zero = worst_zero.max((moved - &base).amax());
        }
    }

    let pi = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.5, 0.5, 2.0, 0.5, 0.5, 0.5, 2.0]);
    let model = GaussianModel::new(pi.clone(), DVector::zeros(3), PartitionSpec::new(1, 1, 1).unwrap()).unwrap();
    let cert = blanket_certificate(&model, 1e-12).unwrap();
    // E[η | b, μ] moves by -Π_ημ/Π_ηη per unit of μ: the partial correlation
    // -Π_ημ/√(Π_ηη Π_μμ) rescaled by √(Π_μμ/Π_ηη)
    let rho = -pi[(0, 2)] / (pi[(0, 0)] * pi[(2, 2)]).sqrt();
    let expected = (rho * (pi[(2, 2)] / pi[(0, 0)]).sqrt()).abs();
    let coupled_ok = !cert.is_blanket && cert.consistent && cert.conditional_mean_gap >= 0.1
        && (cert.conditional_mean_gap - expected).abs() <= 1e-12;

    Outcome::new(
        all_blanket && worst_zero <= 1e-12 && coupled_ok,
        format!(
            "200 zero-block models: max conditional-mean change {worst_zero:.1e}; Π_ημ = 0.5: change {:.4} (oracle {expected:.4})",
            cert.conditional_mean_gap
        ),
    )
}
