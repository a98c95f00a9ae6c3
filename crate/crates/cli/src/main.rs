//! `orlicz`: N-function checks, modulars, norms, energies, smoothing runs and
//! scenarios from the command line.
//!
//! Exit status: 0 computed (divergence included), 1 usage or input error,
//! 2 failed assertion, 3 smoothing plan failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use commands::Exit;
use config::{set, CommandKind, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "orlicz", version, about = "Orlicz-space numerics: N-functions, modulars, smoothing")]
struct Cli {
    /// JSON run config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized audit points.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; otherwise $ORLICZ_OUT_DIR, otherwise ./orlicz-out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Evaluate and check N-functions.
    #[command(subcommand)]
    Nfunc(NfuncCmd),
    /// `∫ w φ(|u|/λ)` of a field.
    Modular(FieldArgs),
    /// Luxemburg norm of a field.
    Norm(FieldArgs),
    /// Weighted energy `∫∫ w φ(|Db|)`.
    Energy(FieldArgs),
    /// Smoothing runs.
    #[command(subcommand)]
    Smooth(SmoothCmd),
    /// Registered scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
}

#[derive(Debug, Subcommand)]
enum NfuncCmd {
    /// φ, φ' and φ'' at the given points.
    Eval {
        phi: Option<String>,
        #[arg(long = "t", allow_negative_numbers = true)]
        t: Vec<f64>,
    },
    /// Convexity, difference quotients, weak subadditivity, sub-multiplicativity.
    Verify {
        phi: Option<String>,
        /// Subadditivity constant; estimated when omitted.
        #[arg(long)]
        k: Option<f64>,
        #[command(flatten)]
        range: RangeArgs,
    },
    /// The convexity threshold τ₀.
    Tau0,
    /// Range-limited Δ₂ classification.
    Delta2 {
        phi: Option<String>,
        #[command(flatten)]
        range: RangeArgs,
        #[arg(long)]
        finite_measure: bool,
    },
}

#[derive(Debug, Args)]
struct RangeArgs {
    #[arg(long, requires = "hi")]
    lo: Option<f64>,
    #[arg(long, requires = "lo")]
    hi: Option<f64>,
}

#[derive(Debug, Args)]
struct QuadArgs {
    /// Quadrature cells per axis.
    #[arg(long)]
    resolution: Option<usize>,
    /// Dyadic grading shells toward singular points.
    #[arg(long)]
    depth: Option<usize>,
}

#[derive(Debug, Args)]
struct FieldArgs {
    /// Recipe name or path to a field CSV / JSON descriptor.
    #[arg(long)]
    field: Option<String>,
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    weight: Option<String>,
    /// Norm bisection tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Debug, Subcommand)]
enum SmoothCmd {
    /// Plan, smooth and audit a δ ladder; writes a run directory.
    Run(SmoothArgs),
}

#[derive(Debug, Args)]
struct SmoothArgs {
    /// Space-time recipe (interval recipes are lifted) or stored field.
    #[arg(long = "b")]
    b: Option<String>,
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    weight: Option<String>,
    /// Repeat for a ladder; must decrease strictly.
    #[arg(long = "delta")]
    delta: Vec<f64>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    kernel_cells: Option<usize>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    audit_points: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Subadditivity constant used by the domination audit.
    #[arg(long)]
    k: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum ScenarioCmd {
    List,
    Run {
        name: Option<String>,
        /// Scenario config override `key=value` (value parsed as JSON when possible).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn nonempty<T>(v: Vec<T>) -> Option<Vec<T>> {
    (!v.is_empty()).then_some(v)
}

fn range(r: &RangeArgs) -> Option<[f64; 2]> {
    Some([r.lo?, r.hi?])
}

fn apply_quad(cfg: &mut ExperimentConfig, q: &QuadArgs) {
    if q.resolution.is_none() && q.depth.is_none() {
        return;
    }
    let spec = cfg.quadrature.get_or_insert_with(Default::default);
    if let Some(n) = q.resolution {
        spec.resolution = n;
    }
    if let Some(d) = q.depth {
        spec.grading_depth = d;
    }
}

fn apply_field(cfg: &mut ExperimentConfig, a: FieldArgs) {
    set(&mut cfg.field, a.field);
    set(&mut cfg.phi, a.phi);
    set(&mut cfg.lambda, a.lambda);
    set(&mut cfg.weight, a.weight);
    set(&mut cfg.tol, a.tol);
    apply_quad(cfg, &a.quad);
}

fn parse_set(sc: &mut Value, kv: &str) -> Result<()> {
    let (k, v) = kv.split_once('=').with_context(|| format!("--set `{kv}` is not KEY=VALUE"))?;
    let v = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    if sc.is_null() {
        *sc = Value::Object(Default::default());
    }
    sc.as_object_mut().context("scenario_config must be an object")?.insert(k.to_string(), v);
    Ok(())
}

fn execute(cli: Cli) -> Result<Value> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.out_dir, cli.out);
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Cmd::Nfunc(c) => {
            cfg.bind(CommandKind::Nfunc)?;
            match c {
                NfuncCmd::Eval { phi, t } => {
                    set(&mut cfg.phi, phi);
                    set(&mut cfg.t, nonempty(t));
                    cfg.validate()?;
                    commands::nfunc_eval(&cfg)
                }
                NfuncCmd::Verify { phi, k, range: r } => {
                    set(&mut cfg.phi, phi);
                    set(&mut cfg.k, k);
                    set(&mut cfg.range, range(&r));
                    cfg.validate()?;
                    commands::nfunc_verify(&cfg)
                }
                NfuncCmd::Tau0 => Ok(commands::nfunc_tau0()),
                NfuncCmd::Delta2 { phi, range: r, finite_measure } => {
                    set(&mut cfg.phi, phi);
                    set(&mut cfg.range, range(&r));
                    if finite_measure {
                        cfg.finite_measure = Some(true);
                    }
                    cfg.validate()?;
                    commands::nfunc_delta2(&cfg)
                }
            }
        }
        Cmd::Modular(a) => {
            cfg.bind(CommandKind::Modular)?;
            apply_field(&mut cfg, a);
            cfg.validate()?;
            commands::modular(&cfg)
        }
        Cmd::Norm(a) => {
            cfg.bind(CommandKind::Norm)?;
            apply_field(&mut cfg, a);
            cfg.validate()?;
            commands::norm(&cfg)
        }
        Cmd::Energy(a) => {
            cfg.bind(CommandKind::Energy)?;
            apply_field(&mut cfg, a);
            cfg.validate()?;
            commands::energy(&cfg)
        }
        Cmd::Smooth(SmoothCmd::Run(a)) => {
            cfg.bind(CommandKind::Smooth)?;
            set(&mut cfg.field, a.b);
            set(&mut cfg.phi, a.phi);
            set(&mut cfg.weight, a.weight);
            set(&mut cfg.deltas, nonempty(a.delta));
            set(&mut cfg.resolution, a.resolution);
            set(&mut cfg.kernel_cells, a.kernel_cells);
            set(&mut cfg.fraction, a.fraction);
            set(&mut cfg.audit_points, a.audit_points);
            set(&mut cfg.tol, a.tol);
            set(&mut cfg.k, a.k);
            cfg.validate()?;
            commands::smooth_run(&cfg)
        }
        Cmd::Scenario(ScenarioCmd::List) => Ok(commands::scenario_list()),
        Cmd::Scenario(ScenarioCmd::Run { name, set: kvs }) => {
            cfg.bind(CommandKind::Scenario)?;
            set(&mut cfg.scenario, name);
            if !kvs.is_empty() {
                let sc = cfg.scenario_config.get_or_insert(Value::Null);
                for kv in &kvs {
                    parse_set(sc, kv)?;
                }
            }
            cfg.validate()?;
            commands::scenario_run(&cfg)
        }
    }
}

/// Best effort: a closed pipe is not an error worth a panic.
fn print(v: &Value) {
    let text = serde_json::to_string_pretty(v).expect("reports serialize");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(cli) {
        Ok(v) => {
            print(&v);
            ExitCode::SUCCESS
        }
        Err(e) => match e.downcast::<Exit>() {
            Ok(exit) => {
                if !exit.report.is_null() {
                    print(&exit.report);
                }
                eprintln!("error: {}", exit.message);
                ExitCode::from(exit.code as u8)
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
