use blanket_core::independence::{higher_order_blanket_check, tower_contraction_check, CiMethod, DiscreteJoint, HigherOrderOptions};
use blanket_core::{surprisal_tensor, Monomial, PartitionSpec, Polynomial, Potential};
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::common;
use crate::Outcome;

fn kernel(rng: &mut ChaCha8Rng, arity: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..arity).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn outcomes(arities: &[usize]) -> Vec<Vec<usize>> {
    arities.iter().fold(vec![vec![]], |acc, &a| {
        acc.into_iter()
            .flat_map(|o: Vec<usize>| {
                (0..a).map(move |v| {
                    let mut o = o.clone();
                    o.push(v);
                    o
                })
            })
            .collect()
    })
}

/// `p(b) p(η | b) Π_s p(μ^s | b, μ^{s-1})` over variables `[η, b, μ¹, …]`.
fn chain_weights(rng: &mut ChaCha8Rng, arities: &[usize]) -> Vec<f64> {
    let s = arities.len() - 2;
    let pb = kernel(rng, arities[1]);
    let p_eta: Vec<Vec<f64>> = (0..arities[1]).map(|_| kernel(rng, arities[0])).collect();
    // kernels[s][b][prev] over μ^s, prev = value of μ^{s-1} (0 for the first)
    let kernels: Vec<Vec<Vec<Vec<f64>>>> = (0..s)
        .map(|level| {
            let prev = if level == 0 { 1 } else { arities[level + 1] };
            (0..arities[1])
                .map(|_| (0..prev).map(|_| kernel(rng, arities[level + 2])).collect())
                .collect()
        })
        .collect();
    outcomes(arities)
        .iter()
        .map(|o| {
            let (eta, b) = (o[0], o[1]);
            let mut w = pb[b] * p_eta[b][eta];
            for level in 0..s {
                let prev = if level == 0 { 0 } else { o[level + 1] };
                w *= kernels[level][b][prev][o[level + 2]];
            }
            w
        })
        .collect()
}

pub fn tower_contraction() -> Outcome {
    let mut rng = common::rng(0xacc8);
    let (mut counterexamples, mut chain_failures, mut non_vacuous, mut worst_gap_err) = (0, 0, 0, 0.0f64);
    let mut bound_breaks = 0;
    let mut first: Option<String> = None;
    for case in 0..10_000 {
        let s = rng.random_range(1..=3);
        let arities: Vec<usize> = (0..s + 2).map(|_| rng.random_range(2..=3)).collect();
        let cells: usize = arities.iter().product();
        let family = case % 3;
        let weights: Vec<f64> = match family {
            0 => (0..cells)
                .map(|_| if rng.random::<f64>() < 0.1 { 0.0 } else { rng.random::<f64>().powi(3) })
                .collect(),
            1 => chain_weights(&mut rng, &arities),
            _ => {
                let delta = 10f64.powf(-rng.random_range(2.0..6.0));
                chain_weights(&mut rng, &arities)
                    .into_iter()
                    .map(|w| w + delta * rng.random::<f64>())
                    .collect()
            }
        };
        let joint = DiscreteJoint::from_weights(arities.clone(), weights).unwrap();
        let externals: Vec<usize> = (2..s + 2).collect();

        let strict = tower_contraction_check(&joint, &[0], &[1], &externals, 1e-12).unwrap();
        if !strict.lemma_respected {
            counterexamples += 1;
        }
        if family == 1 && !(strict.hypotheses.iter().all(|&h| h) && strict.conclusion_holds) {
            chain_failures += 1;
        }

        // oracle gaps, and a tolerance at which every hypothesis holds
        let probs = joint.probs();
        let mut oracle_gaps = Vec::with_capacity(s);
        for level in 0..s {
            let given: Vec<usize> = std::iter::once(1).chain(externals[level + 1..].iter().copied()).collect();
            oracle_gaps.push(common::brute_ci_gap(&arities, probs, &[0], &given, &externals[level..=level]));
        }
        let oracle_conclusion = common::brute_ci_gap(&arities, probs, &[0], &[1], &externals);
        for (lib, ora) in strict.hypothesis_gaps.iter().zip(&oracle_gaps) {
            worst_gap_err = worst_gap_err.max((lib - ora).abs());
        }
        worst_gap_err = worst_gap_err.max((strict.conclusion_gap - oracle_conclusion).abs());
        // the telescoping argument bounds the conclusion by the sum of the hypothesis gaps
        if oracle_conclusion > oracle_gaps.iter().sum::<f64>() + 1e-12 {
            bound_breaks += 1;
        }

        // smallest tolerance at which every hypothesis holds, floored above rounding noise
        let tol = (strict.hypothesis_gaps.iter().copied().fold(0.0, f64::max) * (1.0 + 1e-9)).max(1e-14);
        let tight = tower_contraction_check(&joint, &[0], &[1], &externals, tol).unwrap();
        if tight.hypotheses.iter().all(|&h| h) {
            non_vacuous += 1;
        }
        if !tight.lemma_respected {
            counterexamples += 1;
            if first.is_none() {
                first = Some(format!(
                    "case {case} family {family}: gaps {:?} conclusion {:e} tol {:e}",
                    tight.hypothesis_gaps, tight.conclusion_gap, tight.conclusion_tol
                ));
            }
        }
    }
    Outcome::new(
        counterexamples == 0 && chain_failures == 0 && worst_gap_err <= 1e-12 && bound_breaks == 0,
        format!(
            "{counterexamples} counterexamples in 20000 checks ({non_vacuous} with all hypotheses holding); {chain_failures} chain failures; max gap error vs enumeration oracle {worst_gap_err:.1e}{}",
            first.map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn half_norm(n: usize) -> Vec<Monomial> {
    (0..n)
        .map(|c| {
            let mut p = vec![0; n];
            p[c] = 2;
            Monomial::new(0.5, p)
        })
        .collect()
}

/// Slice gap at the origin of the non-selected coordinates, from a direct tabulation of `exp(-U)`.
fn oracle_slice_gap(u: &Polynomial, eta: usize, mus: [usize; 2], n: usize) -> f64 {
    let nodes: Vec<f64> = (0..41).map(|i| -5.0 + 0.25 * i as f64).collect();
    let mut x = vec![0.0; n];
    let mut table = vec![vec![vec![0.0; 41]; 41]; 41];
    let mut top = f64::NEG_INFINITY;
    for (a, &e) in nodes.iter().enumerate() {
        for (b, &m1) in nodes.iter().enumerate() {
            for (c, &m2) in nodes.iter().enumerate() {
                x[eta] = e;
                x[mus[0]] = m1;
                x[mus[1]] = m2;
                table[a][b][c] = -u.eval(&x);
                top = top.max(table[a][b][c]);
            }
        }
    }
    let w: Vec<Vec<Vec<f64>>> = table
        .iter()
        .map(|p| p.iter().map(|q| q.iter().map(|v| (v - top).exp()).collect()).collect())
        .collect();
    let total: f64 = w.iter().flatten().flatten().sum();
    let mut gap = 0.0f64;
    for b in 0..41 {
        for c in 0..41 {
            let col: f64 = (0..41).map(|a| w[a][b][c]).sum();
            for slab in &w {
                let p_eta: f64 = slab.iter().flatten().sum::<f64>() / total;
                gap = gap.max((slab[b][c] / col - p_eta).abs());
            }
        }
    }
    gap
}

pub fn trilinear_example() -> Outcome {
    // U = η³ on (η, b, μ)
    let cubic = Potential::polynomial(Polynomial::new(3, vec![Monomial::new(1.0, vec![3, 0, 0])]).unwrap()).unwrap();
    let origin3 = DVector::zeros(3);
    let cubic_h = surprisal_tensor(&cubic, &origin3, 2).unwrap();
    let cubic_t = surprisal_tensor(&cubic, &origin3, 3).unwrap();
    let cubic_ok = cubic_h.is_zero() && cubic_t.get(&[0, 0, 0]) == 6.0;

    // U = ½‖x‖² + η μ¹ μ² on k = 2, l = 1, m = 2
    let part = PartitionSpec::new(2, 1, 2).unwrap();
    let (eta, mu1, mu2) = (0, 3, 4);
    let mut terms = half_norm(5);
    terms.push(Monomial::new(1.0, vec![1, 0, 0, 1, 1]));
    let tri_poly = Polynomial::new(5, terms).unwrap();
    let tri = Potential::polynomial(tri_poly.clone()).unwrap();
    let origin5 = DVector::zeros(5);
    let h = surprisal_tensor(&tri, &origin5, 2).unwrap();
    let t = surprisal_tensor(&tri, &origin5, 3).unwrap();
    let tensor_ok = h.get(&[eta, mu1]) == 0.0 && h.get(&[eta, mu2]) == 0.0 && t.get(&[eta, mu1, mu2]) == 1.0;

    let opts = HigherOrderOptions {
        order: Some(3),
        ..Default::default()
    };
    let report = higher_order_blanket_check(&tri, &part, &opts).unwrap();
    let oracle = oracle_slice_gap(&tri_poly, eta, [mu1, mu2], 5);
    let report_ok = report.ci_method == CiMethod::Grid
        && report.all_hessian_zero
        && report.tensor_entry == 1.0
        && !report.joint_ci_holds
        && report.ci_gap > 1e-3
        && (report.ci_gap - oracle).abs() <= 1e-12;

    let sep = Potential::polynomial(Polynomial::new(5, half_norm(5)).unwrap()).unwrap();
    let control = higher_order_blanket_check(&sep, &part, &opts).unwrap();
    let control_ok = control.all_hessian_zero && control.joint_ci_holds && control.consistent;

    Outcome::new(
        cubic_ok && tensor_ok && report_ok && control_ok,
        format!(
            "∂³η³ = {}; trilinear Hessian entries ({}, {}), 3-tensor entry {}; grid CI gap {:.4} (oracle {oracle:.4}, tol 1e-3); separable control gap {:.1e}",
            cubic_t.get(&[0, 0, 0]),
            h.get(&[eta, mu1]),
            h.get(&[eta, mu2]),
            t.get(&[eta, mu1, mu2]),
            report.ci_gap,
            control.ci_gap
        ),
    )
}
