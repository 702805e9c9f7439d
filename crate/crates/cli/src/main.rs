//! `blanket`: run blanket-index experiments from config files and emit
//! reproducible JSON reports.
//!
//! Exit status: 0 when the run succeeds and every checked flag passes, 2 when
//! it succeeds but a flag fails, 1 on any error.

mod config;
mod run;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use blanket_core::blanket::Thresholds;
use blanket_core::io::{from_json, parse_ensemble_config, read_discrete_csv, GaussianDoc, SystemDoc};
use blanket_core::{HigherOrderOptions, IntegrateOptions};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use config::*;

#[derive(Parser)]
#[command(name = "blanket", version, about = "Markov blanket diagnostics for stationary diffusions")]
struct Cli {
    /// Worker threads for parallel experiments (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Report path; side-file CSVs are written next to it. Prints to stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural invariants of a system file.
    Validate {
        #[arg(long)]
        system: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Blanket indices, normalised index, nonlinear correction and verdict.
    Report {
        #[arg(long)]
        system: PathBuf,
        /// Evaluation point, comma separated (default: the potential's mean).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        state: Option<Vec<f64>>,
        /// Entry bound h (default: largest observed product).
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, default_value_t = Thresholds::default().tol_strict)]
        tol_strict: f64,
        #[arg(long, default_value_t = Thresholds::default().tol_weak)]
        tol_weak: f64,
        #[arg(long, default_value_t = Thresholds::default().weak_fraction)]
        weak_fraction: f64,
        /// Zero tolerance for the per-pair Jacobian, Hessian and index checks.
        #[arg(long, default_value_t = 1e-10)]
        zero_tol: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Random-ensemble tail experiments.
    Ensemble {
        #[command(subcommand)]
        action: EnsembleAction,
    },
    /// Euler-Maruyama integration with stationary moments and an empirical blanket test.
    Simulate {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Steps discarded before computing moments (default: 10% of steps).
        #[arg(long)]
        burn_in: Option<usize>,
        /// Initial state, comma separated (default: the potential's mean).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x0: Option<Vec<f64>>,
        /// Drop the noise term (gradient-flow diagnostic).
        #[arg(long)]
        zero_noise: bool,
        #[arg(long, default_value_t = 0.02)]
        blanket_tol: f64,
        /// Relative Frobenius tolerance against the analytic covariance.
        #[arg(long, default_value_t = 0.05)]
        stationarity_tol: f64,
        /// Write every state to `<out stem>.trajectory.csv` (needs --out).
        #[arg(long)]
        trajectory: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Conditional-independence checks.
    Ci {
        #[command(subcommand)]
        action: CiAction,
    },
    /// Hessian zeros against joint independence for surprisals of degree up to 4.
    HigherOrder {
        #[arg(long)]
        system: PathBuf,
        /// Block-local internal index.
        #[arg(long, default_value_t = 0)]
        eta: usize,
        /// Block-local external indices (default: the first ν-1).
        #[arg(long, value_delimiter = ',')]
        externals: Option<Vec<usize>>,
        /// Tensor order ν (default: the potential's degree).
        #[arg(long)]
        order: Option<usize>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        point: Option<Vec<f64>>,
        #[arg(long, default_value_t = HigherOrderOptions::default().hessian_tol)]
        hessian_tol: f64,
        #[arg(long, default_value_t = HigherOrderOptions::default().ci_tol)]
        ci_tol: f64,
        #[arg(long, default_value_t = HigherOrderOptions::default().grid_points)]
        grid_points: usize,
        #[arg(long, default_value_t = HigherOrderOptions::default().grid_lo, allow_negative_numbers = true)]
        grid_lo: f64,
        #[arg(long, default_value_t = HigherOrderOptions::default().grid_hi, allow_negative_numbers = true)]
        grid_hi: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Execute the config embedded in an earlier report.
    Rerun {
        report: PathBuf,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Subcommand)]
enum EnsembleAction {
    /// Exceedance frequencies of the normalised index against the analytic bounds.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Bound the flags are checked against (default: nonlinear when the
        /// config sets an offset, chi when chi > 1, otherwise chernoff).
        #[arg(long, value_enum)]
        criterion: Option<Criterion>,
        /// Also scan these complement sizes n-1, ascending.
        #[arg(long, value_delimiter = ',')]
        scan: Option<Vec<usize>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Subcommand)]
enum CiAction {
    /// Gaussian model (JSON) or discrete joint table (CSV, by extension).
    Check {
        input: PathBuf,
        /// Discrete: variables of X, by label or index.
        #[arg(long, value_delimiter = ',')]
        x: Vec<String>,
        /// Discrete: conditioning variables.
        #[arg(long, value_delimiter = ',')]
        given: Vec<String>,
        /// Discrete: variables of Z.
        #[arg(long, value_delimiter = ',')]
        z: Vec<String>,
        /// Discrete: also check the chained independences with Z as the external sequence.
        #[arg(long)]
        tower: bool,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        output: Output,
    },
}

/// Everything a report file contains.
#[derive(Serialize, Deserialize)]
struct Envelope {
    tool: String,
    version: String,
    timestamp: String,
    #[serde(flatten)]
    run: RunConfig,
    seed: Option<u64>,
    flags_passed: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    files: BTreeMap<String, String>,
    result: serde_json::Value,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn system_doc(path: &Path) -> Result<SystemDoc> {
    let doc: SystemDoc = from_json(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    // Reject bad systems before they are embedded in a report.
    doc.to_system().with_context(|| format!("checking {}", path.display()))?;
    Ok(doc)
}

fn resolve(command: Command) -> Result<(RunConfig, Output)> {
    Ok(match command {
        Command::Validate { system, output } => (
            RunConfig::Validate(ValidateConfig {
                system: system_doc(&system)?,
            }),
            output,
        ),
        Command::Report {
            system,
            state,
            h,
            tol_strict,
            tol_weak,
            weak_fraction,
            zero_tol,
            output,
        } => (
            RunConfig::Report(ReportConfig {
                system: system_doc(&system)?,
                state,
                h,
                thresholds: Thresholds {
                    tol_strict,
                    tol_weak,
                    weak_fraction,
                },
                zero_tol,
            }),
            output,
        ),
        Command::Ensemble {
            action:
                EnsembleAction::Run {
                    config,
                    criterion,
                    scan,
                    seed,
                    trials,
                    output,
                },
        } => {
            let mut ensemble =
                parse_ensemble_config(&read(&config)?).with_context(|| format!("parsing {}", config.display()))?;
            if let Some(s) = seed {
                ensemble.seed = s;
            }
            if let Some(t) = trials {
                ensemble.trials = t;
                ensemble.validate()?;
            }
            let criterion = criterion.unwrap_or(if ensemble.nonlinear_phi.is_some() {
                Criterion::Nonlinear
            } else if ensemble.chi > 1 {
                Criterion::Chi
            } else {
                Criterion::Chernoff
            });
            (
                RunConfig::Ensemble(EnsembleRunConfig {
                    ensemble,
                    criterion,
                    scan,
                }),
                output,
            )
        }
        Command::Simulate {
            system,
            dt,
            steps,
            seed,
            burn_in,
            x0,
            zero_noise,
            blanket_tol,
            stationarity_tol,
            trajectory,
            output,
        } => {
            let mut integrate = IntegrateOptions::new(dt, steps, seed);
            integrate.burn_in = Some(burn_in.unwrap_or_else(|| integrate.resolved_burn_in()));
            integrate.zero_noise = zero_noise;
            (
                RunConfig::Simulate(SimulateConfig {
                    system: system_doc(&system)?,
                    x0,
                    integrate,
                    blanket_tol,
                    stationarity_tol,
                    write_trajectory: trajectory,
                }),
                output,
            )
        }
        Command::Ci {
            action:
                CiAction::Check {
                    input,
                    x,
                    given,
                    z,
                    tower,
                    tol,
                    output,
                },
        } => {
            let is_csv = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            let input = if is_csv {
                let file = fs::File::open(&input).with_context(|| format!("reading {}", input.display()))?;
                let joint = read_discrete_csv(file).with_context(|| format!("parsing {}", input.display()))?;
                let labels = joint.labels().to_vec();
                CiInput::Discrete {
                    x: run::resolve_vars(&labels, &x)?,
                    given: run::resolve_vars(&labels, &given)?,
                    z: run::resolve_vars(&labels, &z)?,
                    table: DiscreteTable {
                        labels,
                        arities: joint.arities().to_vec(),
                        probs: joint.probs().to_vec(),
                    },
                    tower,
                }
            } else {
                if !(x.is_empty() && given.is_empty() && z.is_empty()) || tower {
                    bail!("--x, --given, --z and --tower apply to discrete tables only");
                }
                let model: GaussianDoc =
                    from_json(&read(&input)?).with_context(|| format!("parsing {}", input.display()))?;
                model.to_model().with_context(|| format!("checking {}", input.display()))?;
                CiInput::Gaussian { model }
            };
            (RunConfig::Ci(CiConfig { input, tol }), output)
        }
        Command::HigherOrder {
            system,
            eta,
            externals,
            order,
            point,
            hessian_tol,
            ci_tol,
            grid_points,
            grid_lo,
            grid_hi,
            output,
        } => (
            RunConfig::HigherOrder(HigherOrderConfig {
                system: system_doc(&system)?,
                options: HigherOrderOptions {
                    eta,
                    externals,
                    order,
                    point,
                    hessian_tol,
                    ci_tol,
                    grid_points,
                    grid_lo,
                    grid_hi,
                    ..HigherOrderOptions::default()
                },
            }),
            output,
        ),
        Command::Rerun { report, output } => {
            let env: Envelope = from_json(&read(&report)?).with_context(|| format!("parsing {}", report.display()))?;
            (env.run, output)
        }
    })
}

fn side_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn timestamp() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .unwrap_or_default()
}

fn dispatch(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let (run, output) = resolve(cli.command)?;
    let outcome = run::execute(&run)?;

    let mut files = BTreeMap::new();
    if !outcome.side_files.is_empty() {
        match &output.out {
            Some(out) => {
                for side in &outcome.side_files {
                    let path = side_path(out, side.suffix);
                    fs::write(&path, &side.contents).with_context(|| format!("writing {}", path.display()))?;
                    let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
                    files.insert(side.key.to_string(), name);
                }
            }
            None if matches!(&run, RunConfig::Simulate(c) if c.write_trajectory) => {
                bail!("--trajectory needs --out to place the CSV");
            }
            None => {}
        }
    }

    let envelope = Envelope {
        tool: "blanket".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        timestamp: timestamp(),
        run,
        seed: outcome.seed,
        flags_passed: outcome.flags_passed,
        files,
        result: outcome.result,
    };
    let text = serde_json::to_string_pretty(&envelope)? + "\n";
    match &output.out {
        Some(out) => fs::write(out, text).with_context(|| format!("writing {}", out.display()))?,
        None => print!("{text}"),
    }
    Ok(outcome.flags_passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
