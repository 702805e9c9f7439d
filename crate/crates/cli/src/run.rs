use anyhow::{bail, Context, Result};
use blanket_core::blanket::{heins_dacosta_check, HeinsDaCostaCheck};
use blanket_core::independence::{
    blanket_certificate, discrete_ci, hessian_ci_equivalence, tower_contraction_check, DiscreteJoint, GaussianModel,
};
use blanket_core::io::matrix_to_rows;
use blanket_core::{
    decay_scan, empirical_blanket_test, empirical_moments, flow_jacobian, higher_order_blanket_check, integrate_with,
    normalized_index, run_dependent_tail_experiment, run_nonlinear_tail_experiment, run_tail_experiment,
    validate_system, DecayTable, Potential, StateVector, TailReport, Trajectory, Verdict,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::*;

/// A CSV written next to the report, named `<report stem>.<suffix>`.
pub struct SideFile {
    pub key: &'static str,
    pub suffix: &'static str,
    pub contents: String,
}

pub struct Outcome {
    /// `None` when the command draws no random numbers.
    pub seed: Option<u64>,
    pub flags_passed: bool,
    pub result: Value,
    pub side_files: Vec<SideFile>,
}

impl Outcome {
    fn new(seed: Option<u64>, flags_passed: bool, result: impl Serialize) -> Result<Self> {
        Ok(Outcome {
            seed,
            flags_passed,
            result: serde_json::to_value(result)?,
            side_files: Vec::new(),
        })
    }
}

pub fn execute(config: &RunConfig) -> Result<Outcome> {
    match config {
        RunConfig::Validate(c) => validate(c),
        RunConfig::Report(c) => report(c),
        RunConfig::Ensemble(c) => ensemble(c),
        RunConfig::Simulate(c) => simulate(c),
        RunConfig::Ci(c) => ci(c),
        RunConfig::HigherOrder(c) => higher_order(c),
    }
}

fn validate(c: &ValidateConfig) -> Result<Outcome> {
    let sys = c.system.to_system()?;
    let report = validate_system(&sys);
    Outcome::new(None, report.passed, &report)
}

#[derive(Serialize)]
struct PairCheck {
    i: usize,
    j: usize,
    #[serde(flatten)]
    check: HeinsDaCostaCheck,
}

fn report(c: &ReportConfig) -> Result<Outcome> {
    let sys = c.system.to_system()?;
    let x = match &c.state {
        Some(s) => StateVector::from_vec(s.clone())?,
        None => sys.working_point(),
    };
    let report = normalized_index(&sys, &x, c.h, c.thresholds)?;
    let jacobian = flow_jacobian(&sys, &x)?;
    let p = sys.partition()?;
    let mut checks = Vec::with_capacity(p.k() * p.m());
    for i in 0..p.k() {
        for j in 0..p.m() {
            checks.push(PairCheck {
                i,
                j,
                check: heins_dacosta_check(&sys, i, j, &x, c.zero_tol)?,
            });
        }
    }
    let passed = report.verdict != Verdict::None;
    Outcome::new(
        None,
        passed,
        json!({
            "blanket": report,
            "jacobian": matrix_to_rows(&jacobian.entries),
            "pair_checks": checks,
        }),
    )
}

fn ensemble(c: &EnsembleRunConfig) -> Result<Outcome> {
    let cfg = &c.ensemble;
    let report = match c.criterion {
        Criterion::Chernoff => run_tail_experiment(cfg)?,
        Criterion::Chi => run_dependent_tail_experiment(cfg)?,
        Criterion::Nonlinear => run_nonlinear_tail_experiment(cfg)?,
    };
    let decay = c.scan.as_deref().map(|sizes| decay_scan(cfg, sizes)).transpose()?;
    let mut out = Outcome::new(Some(cfg.seed), report.all_satisfied, json!({ "tail": report, "decay": decay }))?;
    out.side_files.push(SideFile {
        key: "tail_rows",
        suffix: "tail.csv",
        contents: tail_csv(&report)?,
    });
    if let Some(d) = &decay {
        out.side_files.push(SideFile {
            key: "decay_rows",
            suffix: "decay.csv",
            contents: decay_csv(d)?,
        });
    }
    Ok(out)
}

/// Shortest round-trip form, with an exponent for tiny values.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn tail_csv(report: &TailReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "n",
        "epsilon",
        "exceedances",
        "frequency",
        "chernoff_bound",
        "chi_bound",
        "union_bound",
        "union_informative",
        "nonlinear_bound",
        "bound",
        "bound_satisfied",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.n.to_string(),
            num(r.epsilon),
            r.exceedances.to_string(),
            num(r.frequency),
            num(r.chernoff_bound),
            num(r.chi_bound),
            num(r.union_bound),
            r.union_informative.to_string(),
            r.nonlinear_bound.map(num).unwrap_or_default(),
            num(r.bound),
            r.bound_satisfied.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn decay_csv(table: &DecayTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["n".to_string(), "median_abs_x".into(), "max_abs_x".into()];
    header.extend(table.epsilon_grid.iter().map(|e| format!("p_gt_{e}")));
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec = vec![r.n.to_string(), num(r.median_abs_x), num(r.max_abs_x)];
        rec.extend(r.frequencies.iter().copied().map(num));
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn trajectory_csv(traj: &Trajectory) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((0..traj.dim()).map(|c| format!("x{c}")))?;
    for s in traj.states() {
        w.write_record(s.iter().copied().map(num))?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn simulate(c: &SimulateConfig) -> Result<Outcome> {
    let sys = c.system.to_system()?;
    let x0 = match &c.x0 {
        Some(v) => StateVector::from_vec(v.clone())?,
        None => sys.working_point(),
    };
    let traj = integrate_with(&sys, &x0, &c.integrate)?;
    let moments = empirical_moments(&traj, traj.burn_in)?;

    // Only a quadratic surprisal has a closed-form stationary covariance.
    let stationarity = match sys.potential() {
        Potential::Quadratic { precision, .. } if !c.integrate.zero_noise => {
            let target = precision.clone().try_inverse().context("precision is not invertible")?;
            let err = (&moments.covariance - &target).norm() / target.norm();
            Some(json!({
                "analytic_covariance": matrix_to_rows(&target),
                "relative_frobenius_error": err,
                "tol": c.stationarity_tol,
                "within_tol": err <= c.stationarity_tol,
            }))
        }
        _ => None,
    };
    let blanket = match sys.partition_opt() {
        Some(p) if !c.integrate.zero_noise => Some(empirical_blanket_test(&traj, p, c.blanket_tol)?),
        _ => None,
    };
    let passed = stationarity
        .as_ref()
        .is_none_or(|s| s["within_tol"].as_bool() == Some(true));
    let last = traj.state(traj.len() - 1).to_vec();
    let mut out = Outcome::new(
        Some(c.integrate.seed),
        passed,
        json!({
            "steps": traj.len() - 1,
            "burn_in": traj.burn_in,
            "final_state": last,
            "moments": {
                "mean": moments.mean.iter().collect::<Vec<_>>(),
                "covariance": matrix_to_rows(&moments.covariance),
                "effective_samples": moments.effective_samples,
                "samples": moments.samples,
            },
            "stationarity": stationarity,
            "blanket_test": blanket,
        }),
    )?;
    if c.write_trajectory {
        out.side_files.push(SideFile {
            key: "trajectory",
            suffix: "trajectory.csv",
            contents: trajectory_csv(&traj)?,
        });
    }
    Ok(out)
}

fn ci(c: &CiConfig) -> Result<Outcome> {
    match &c.input {
        CiInput::Gaussian { model } => {
            let model: GaussianModel = model.to_model()?;
            let cert = blanket_certificate(&model, c.tol)?;
            let p = *model.partition();
            let mut pairs = Vec::new();
            for i in 0..p.k() {
                for j in 0..p.m() {
                    let r = hessian_ci_equivalence(&model, i, j, c.tol)?;
                    pairs.push(json!({ "i": i, "j": j, "result": r }));
                }
            }
            let agree = pairs.iter().all(|v| v["result"]["agree"] == json!(true));
            let passed = cert.is_blanket && cert.consistent && agree;
            Outcome::new(None, passed, json!({ "certificate": cert, "pairs": pairs }))
        }
        CiInput::Discrete {
            table,
            x,
            given,
            z,
            tower,
        } => {
            let joint = DiscreteJoint::new(table.arities.clone(), table.probs.clone(), table.labels.clone())?;
            let gap = joint.ci_gap(x, given, z)?;
            let holds = discrete_ci(&joint, x, given, z, c.tol)?;
            let tower = tower.then(|| tower_contraction_check(&joint, x, given, z, c.tol)).transpose()?;
            let passed = holds && tower.as_ref().is_none_or(|t| t.lemma_respected);
            Outcome::new(None, passed, json!({ "gap": gap, "holds": holds, "tower": tower }))
        }
    }
}

fn higher_order(c: &HigherOrderConfig) -> Result<Outcome> {
    let sys = c.system.to_system()?;
    let Some(partition) = sys.partition_opt() else {
        bail!("higher-order check needs a partitioned system");
    };
    let report = higher_order_blanket_check(sys.potential(), partition, &c.options)?;
    Outcome::new(None, report.consistent, &report)
}

/// Resolve variables given by label or by index.
pub fn resolve_vars(labels: &[String], names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| match labels.iter().position(|l| l == n) {
            Some(i) => Ok(i),
            None => match n.parse::<usize>() {
                Ok(i) if i < labels.len() => Ok(i),
                _ => bail!("unknown variable `{n}` (columns: {})", labels.join(", ")),
            },
        })
        .collect()
}
