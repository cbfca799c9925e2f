//! `md`: solve, simulate, dualize and verify market instances.
//!
//! Exit codes: 0 success, 1 I/O or usage, 2 schema, 3 incompatible,
//! 4 uncertified result.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use market_core::chores::{solve_fisher_chores, solve_lindahl_chores, ChoresConfig};
use market_core::dynamics::GammaRule;
use market_core::market::io::{instance_to_json, parse_instance, parse_solution, SolutionFile};
use market_core::{
    dualize, dualize_equilibrium, run, verify, DynamicKind, DynamicsConfig, Equilibrium, Error, Init, MarketInstance,
    MarketKind, ResidualReport,
};

const UNCERTIFIED: u8 = 4;

#[derive(Parser)]
#[command(name = "md", version, about = "Fisher and Lindahl market equilibria")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute an equilibrium and its verification report.
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Target accuracy of the solver.
        #[arg(long, default_value_t = 1e-9)]
        precision: f64,
        /// Verification tolerance.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a market dynamic and export its trace.
    Dynamics {
        instance: PathBuf,
        #[arg(long)]
        rule: DynamicKind,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Add one `b_i_j` column per spending entry to the trace.
        #[arg(long)]
        with_b: bool,
        /// Start from random spending drawn from this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Uniform tatonnement step size.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        allow_small_gamma: bool,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Final-state JSON; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the dual instance.
    Dualize {
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the residual report of a candidate equilibrium.
    Verify {
        instance: PathBuf,
        equilibrium: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Eg,
    Nsw,
    Shmyrev,
    ChoresKkt,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Schema(_) | Error::InvalidFamily(_) | Error::InvalidInstance(_) | Error::Dimension { .. }) => 2,
        Some(Error::Incompatible(_) | Error::Domain(_)) => 3,
        Some(Error::NotConverged { .. } | Error::Unbounded(_)) => UNCERTIFIED,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("md: {e:#}");
        return ExitCode::from(1);
    }
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("md: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(feature = "oracle")]
fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MD_THREADS") {
        let n: usize = v.parse().with_context(|| format!("MD_THREADS={v}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

#[cfg(not(feature = "oracle"))]
fn configure_threads() -> Result<()> {
    Ok(())
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Solve { instance, method, precision, tol, out } => {
            cmd_solve(&instance, method, precision, tol, out.as_deref())
        }
        Command::Dynamics { instance, rule, iters, trace, with_b, seed, gamma, allow_small_gamma, tol, out } => {
            let inst = read_instance(&instance)?;
            let config = DynamicsConfig {
                max_iters: iters,
                seed: seed.unwrap_or(0),
                gamma: gamma.map_or(GammaRule::Default, GammaRule::Uniform),
                allow_small_gamma,
                ..Default::default()
            };
            let init = if seed.is_some() { Init::Random } else { Init::Default };
            let result = run(&inst, rule, &init, &config)?;
            for w in &result.warnings {
                eprintln!("md: warning: {w}");
            }
            if let Some(path) = trace {
                write(&path, &result.to_csv(with_b))?;
            }
            let report = verify(&inst, &result.equilibrium, tol)?;
            let mut doc = solution_value(result.equilibrium.clone(), &format!("dynamics:{rule}"), report);
            doc["iterations"] = result.iterations.into();
            doc["converged"] = result.converged.into();
            doc["residual"] = result.final_residual().into();
            if let Some(g) = &result.gamma {
                doc["gamma"] = g.clone().into();
            }
            emit(out.as_deref(), &doc)?;
            eprintln!("md: {rule} ran {} iterations, residual {:e}", result.iterations, result.final_residual());
            Ok(0)
        }
        Command::Dualize { instance, out } => {
            let inst = read_instance(&instance)?;
            let text = instance_to_json(&dualize(&inst)?);
            match out {
                Some(path) => write(&path, &text)?,
                None => print_stdout(&text)?,
            }
            Ok(0)
        }
        Command::Verify { instance, equilibrium, tol } => {
            let inst = read_instance(&instance)?;
            let sol = parse_solution(&read(&equilibrium)?)?;
            let report = verify(&inst, &sol.equilibrium, tol)?;
            print_stdout(&serde_json::to_string_pretty(&report)?)?;
            Ok(status(&report))
        }
    }
}

fn cmd_solve(path: &Path, method: Option<Method>, precision: f64, tol: f64, out: Option<&Path>) -> Result<u8> {
    let inst = read_instance(path)?;
    let method = method.unwrap_or(match inst.kind() {
        MarketKind::FisherGoods => Method::Eg,
        MarketKind::LindahlGoods => Method::Nsw,
        MarketKind::FisherChores | MarketKind::LindahlChores => Method::ChoresKkt,
    });
    if inst.kind().is_chores() != matches!(method, Method::ChoresKkt) {
        return Err(Error::Incompatible(format!("method does not apply to a {:?} market", inst.kind())).into());
    }
    let mut extra = None;
    let (eq, tag) = match method {
        Method::Eg => oracle::eg(&inst, precision)?,
        Method::Nsw => oracle::nsw(&inst, precision)?,
        Method::Shmyrev => shmyrev(&inst, precision)?,
        Method::ChoresKkt => {
            let config = ChoresConfig { verify_tol: tol, ..Default::default() };
            let (eq, sol) = match inst.kind() {
                MarketKind::FisherChores => {
                    let sol = solve_fisher_chores(&inst, &config)?;
                    (sol.equilibrium.clone(), sol)
                }
                _ => {
                    let sol = solve_lindahl_chores(&inst, &config)?;
                    (sol.equilibrium, sol.dual)
                }
            };
            extra = Some(serde_json::to_value(sol.kkt)?);
            (eq, sol.method)
        }
    };
    let report = verify(&inst, &eq, tol)?;
    let mut doc = solution_value(eq, &tag, report.clone());
    if let Some(kkt) = extra {
        doc["kkt"] = kkt;
    }
    emit(out, &doc)?;
    if !report.certified {
        eprintln!("md: result not certified at tolerance {tol:e}");
    }
    Ok(status(&report))
}

/// Mirror descent on the Shmyrev program of the Lindahl side. Fisher
/// instances run on their dual.
fn shmyrev(inst: &MarketInstance, precision: f64) -> Result<(Equilibrium, String)> {
    let config = DynamicsConfig {
        max_iters: 200_000,
        stop_residual: precision,
        stop_movement: precision,
        record_every: 1000,
        ..Default::default()
    };
    if inst.kind().is_fisher() {
        let dual = dualize(inst)?;
        let trace = run(&dual, DynamicKind::PrdCesMirror, &Init::Default, &config)?;
        Ok((dualize_equilibrium(&dual, &trace.equilibrium)?, "shmyrev-mirror-dual".into()))
    } else {
        let trace = run(inst, DynamicKind::PrdCesMirror, &Init::Default, &config)?;
        Ok((trace.equilibrium, "shmyrev-mirror".into()))
    }
}

#[cfg(feature = "oracle")]
mod oracle {
    use super::*;
    use market_core::oracle::{first_order_prices, oracle_eg, oracle_nsw_lindahl};

    pub fn eg(inst: &MarketInstance, precision: f64) -> Result<(Equilibrium, String)> {
        if inst.kind().is_fisher() {
            let sol = oracle_eg(inst, precision)?;
            Ok((sol.equilibrium, sol.result.method))
        } else {
            let dual = dualize(inst)?;
            let sol = oracle_eg(&dual, precision)?;
            Ok((dualize_equilibrium(&dual, &sol.equilibrium)?, format!("{}(dual)", sol.result.method)))
        }
    }

    /// NSW allocation with first-order prices. Where the utilities are not
    /// differentiable the prices come from EG on the dual market.
    pub fn nsw(inst: &MarketInstance, precision: f64) -> Result<(Equilibrium, String)> {
        if inst.kind().is_fisher() {
            let dual = dualize(inst)?;
            let (eq, tag) = nsw(&dual, precision)?;
            // A dual-of-dual tag means the primal was solved directly.
            let tag = tag.strip_suffix("(dual)").map_or_else(|| format!("{tag}(dual)"), str::to_string);
            return Ok((dualize_equilibrium(&dual, &eq)?, tag));
        }
        let res = oracle_nsw_lindahl(inst, precision)?;
        match first_order_prices(inst, &res.point) {
            Ok(prices) => Ok((Equilibrium::Lindahl { allocation: res.point, prices }, res.method)),
            Err(_) => eg(inst, precision),
        }
    }
}

#[cfg(not(feature = "oracle"))]
mod oracle {
    use super::*;

    fn unavailable() -> anyhow::Error {
        Error::Incompatible("this build has no oracle solvers; rebuild with the `oracle` feature".into()).into()
    }

    pub fn eg(_: &MarketInstance, _: f64) -> Result<(Equilibrium, String)> {
        Err(unavailable())
    }

    pub fn nsw(_: &MarketInstance, _: f64) -> Result<(Equilibrium, String)> {
        Err(unavailable())
    }
}

fn status(report: &ResidualReport) -> u8 {
    if report.certified {
        0
    } else {
        UNCERTIFIED
    }
}

fn solution_value(equilibrium: Equilibrium, method: &str, report: ResidualReport) -> Value {
    let sol = SolutionFile { equilibrium, method: Some(method.to_string()), report: Some(report) };
    serde_json::to_value(sol).expect("solution serializes")
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_instance(path: &Path) -> Result<MarketInstance> {
    let text = read(path)?;
    parse_instance(&text).with_context(|| path.display().to_string())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, doc: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)?;
    match out {
        Some(path) => write(path, &text),
        None => print_stdout(&text),
    }
}

/// A closed pipe on stdout is not an error.
fn print_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}
