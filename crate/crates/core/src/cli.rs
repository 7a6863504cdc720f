//! Command-line front end: `validate`, `run`, `oracle-compare` and `report`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::LevelFilter;

use crate::case::Case;
use crate::consensus::ConsensusConfig;
use crate::market::{
    self, EquilibriumReport, EquilibriumViolation, InitialPrice, PricingConfig, PricingRun,
    RunStatus, StepScale,
};
use crate::oracle::{self, OracleConfig};
use crate::scenario::{self, EquilibriumSummary, OracleComparison, RunSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gridclear", version, about = "Decentralized LMP market clearing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a case and report every violated invariant.
    Validate {
        /// Case file path or bundled case name.
        #[arg(long)]
        case: String,
    },
    /// Run the pricing process and write trajectories.
    Run {
        #[arg(long)]
        case: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        eps_primal: Option<f64>,
        #[arg(long)]
        eps_dual: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        lambda0: Option<f64>,
        /// Per-unit threshold on the largest bus mismatch.
        #[arg(long)]
        mismatch_tol: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Start every message exchange from zero instead of the previous iterate.
        #[arg(long)]
        cold_start: bool,
    },
    /// Compare a finished run against the brute-force reference solution.
    OracleCompare {
        #[arg(long)]
        case: String,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the outcome of a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

/// Reads `GRIDCLEAR_LOG` (`off`, `info` or `debug`; default `off`).
pub fn init_logging() {
    let level = match std::env::var("GRIDCLEAR_LOG").as_deref() {
        Ok("info") => LevelFilter::Info,
        Ok("debug") => LevelFilter::Debug,
        _ => LevelFilter::Off,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    init_logging();
    let result = match cli.command {
        Command::Validate { case } => validate(&case),
        Command::Run {
            case,
            out,
            rho,
            eps_primal,
            eps_dual,
            beta,
            lambda0,
            mismatch_tol,
            max_iters,
            cold_start,
        } => scenario::resolve_case(&case)
            .map_err(|e| e.to_string())
            .and_then(|c| {
                let (pricing, consensus) = configs(
                    &c,
                    Overrides {
                        rho,
                        eps_primal,
                        eps_dual,
                        beta,
                        lambda0,
                        mismatch_tol,
                        max_iters,
                        cold_start,
                    },
                );
                run(&c, &pricing, &consensus, &out)
            }),
        Command::OracleCompare { case, run, out } => oracle_compare(&case, &run, &out),
        Command::Report { run } => report(&run),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_ERROR
        }
    }
}

fn validate(spec: &str) -> Result<i32, String> {
    match scenario::resolve_case(spec) {
        Ok(c) => {
            println!(
                "{}: ok ({} buses, {} lines, {} GenCos, {} DistCos, {} TransCos, slack {:?})",
                c.name,
                c.network.bus_count(),
                c.network.lines().len(),
                c.gencos.len(),
                c.distcos.len(),
                c.transcos.len(),
                c.network
                    .slack_set()
                    .iter()
                    .map(|&b| c.label(b))
                    .collect::<Vec<_>>()
            );
            Ok(EXIT_OK)
        }
        Err(scenario::LoadError::Invalid(issues)) => {
            for i in &issues {
                println!("{i}");
            }
            Ok(EXIT_ERROR)
        }
        Err(e) => Err(e.to_string()),
    }
}

/// Command-line values that replace case defaults.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub rho: Option<f64>,
    pub eps_primal: Option<f64>,
    pub eps_dual: Option<f64>,
    pub beta: Option<f64>,
    pub lambda0: Option<f64>,
    pub mismatch_tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub cold_start: bool,
}

pub fn configs(case: &Case, o: Overrides) -> (PricingConfig, ConsensusConfig) {
    let mut pricing = PricingConfig::from_case(case);
    let mut consensus = ConsensusConfig::from_case(case);
    if let Some(v) = o.rho {
        consensus.rho = v;
    }
    if let Some(v) = o.eps_primal {
        consensus.eps_primal = v;
    }
    if let Some(v) = o.eps_dual {
        consensus.eps_dual = v;
    }
    if let Some(v) = o.beta {
        pricing.beta = StepScale::Fixed(v);
    }
    if let Some(v) = o.lambda0 {
        pricing.lambda0 = InitialPrice::Uniform(v);
    }
    if let Some(v) = o.mismatch_tol {
        pricing.mismatch_tol = v;
    }
    if let Some(v) = o.max_iters {
        pricing.max_outer_iters = v;
    }
    pricing.warm_start = !o.cold_start;
    (pricing, consensus)
}

fn describe(v: &EquilibriumViolation, case: &Case) -> String {
    match v {
        EquilibriumViolation::Balance { bus, mismatch } => {
            format!("bus {}: mismatch {mismatch:e} p.u.", case.label(*bus))
        }
        EquilibriumViolation::Response { agent, unit, change } => {
            format!("{agent} unit {unit}: response moved by {change:e} MW")
        }
        EquilibriumViolation::Angle { bus, change } => {
            format!("bus {}: angle moved by {change:e} rad", case.label(*bus))
        }
        EquilibriumViolation::Resolve { message } => message.clone(),
    }
}

/// Collects the final state of a run and its equilibrium check.
pub fn summarize(
    case: &Case,
    run: &PricingRun,
    pricing: &PricingConfig,
    consensus: &ConsensusConfig,
    eq: &EquilibriumReport,
) -> RunSummary {
    let last = &run.last;
    let (status, message) = match &run.status {
        RunStatus::Converged => ("converged", None),
        RunStatus::IterationLimit => ("iteration_limit", None),
        RunStatus::Aborted(m) => ("aborted", Some(m.clone())),
    };
    RunSummary {
        case: case.name.clone(),
        status: status.into(),
        message,
        iterations: run.iterations(),
        total_admm_rounds: run.total_admm_rounds(),
        beta: run.beta,
        rho: consensus.rho,
        eps_primal: consensus.eps_primal,
        eps_dual: consensus.eps_dual,
        mismatch_tol: pricing.mismatch_tol,
        warm_start: pricing.warm_start,
        bus_labels: case.bus_labels.clone(),
        prices: last.prices.as_slice().to_vec(),
        theta: last.theta.as_slice().to_vec(),
        elastic: last.profiles.elastic.clone(),
        generation: last.profiles.generation.clone(),
        mismatch: last.mismatch.per_unit.clone(),
        h_inf: last.mismatch.inf_norm(),
        welfare: last.welfare,
        dual_value: last.dual_value,
        duality_gap: last.duality_gap(),
        equilibrium: EquilibriumSummary {
            passed: eq.passed(),
            balance: eq.balance_holds(),
            optimality: eq.optimality_holds(),
            max_mismatch: eq.max_mismatch,
            max_response_change: eq.max_response_change,
            max_angle_change: eq.max_angle_change,
            violations: eq.violations.iter().map(|v| describe(v, case)).collect(),
        },
    }
}

fn run(
    case: &Case,
    pricing: &PricingConfig,
    consensus: &ConsensusConfig,
    out: &Path,
) -> Result<i32, String> {
    let result = market::run_pricing_process(case, pricing, consensus).map_err(|e| e.to_string())?;
    let last = &result.last;
    let eq = market::verify_equilibrium(
        case,
        &last.responses,
        &last.theta,
        &last.prices,
        pricing.mismatch_tol,
        &consensus.subproblem,
    );
    scenario::write_trajectory(&result.trajectory, out).map_err(|e| e.to_string())?;
    let summary = summarize(case, &result, pricing, consensus, &eq);
    scenario::write_run_summary(&summary, out).map_err(|e| e.to_string())?;
    println!(
        "{}: {} after {} iterations ({} exchange rounds), |h|inf = {:.3e} p.u., J = {:.6}, gap = {:.3e}",
        case.name,
        summary.status,
        summary.iterations,
        summary.total_admm_rounds,
        summary.h_inf,
        summary.welfare,
        summary.duality_gap
    );
    Ok(match result.status {
        RunStatus::Converged => EXIT_OK,
        RunStatus::IterationLimit => EXIT_NOT_CONVERGED,
        RunStatus::Aborted(m) => {
            eprintln!("aborted: {m}");
            EXIT_ERROR
        }
    })
}

fn oracle_compare(spec: &str, run_dir: &Path, out: &Path) -> Result<i32, String> {
    let case = scenario::resolve_case(spec).map_err(|e| e.to_string())?;
    let summary = scenario::read_run_summary(run_dir).map_err(|e| e.to_string())?;
    let sol = oracle::centralized_solve_small(&case, &OracleConfig::default()).map_err(|e| e.to_string())?;
    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let cmp = OracleComparison {
        case: case.name.clone(),
        oracle_welfare: sol.welfare,
        run_welfare: summary.welfare,
        relative_welfare_gap: (sol.welfare - summary.welfare).abs() / sol.welfare.abs().max(1e-12),
        max_angle_difference: max_diff(sol.theta.as_slice(), &summary.theta),
        max_price_difference: max_diff(&sol.shadow_prices, &summary.prices),
        oracle_theta: sol.theta.as_slice().to_vec(),
        oracle_shadow_prices: sol.shadow_prices.clone(),
        grid_points: sol.grid_points,
        final_step: sol.final_step,
    };
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let text = serde_json::to_string_pretty(&cmp).map_err(|e| e.to_string())?;
    std::fs::write(out.join("oracle_comparison.json"), text + "\n").map_err(|e| e.to_string())?;
    println!(
        "{}: oracle J = {:.9}, run J = {:.9}, relative gap {:.3e}, max angle diff {:.3e} rad, max price diff {:.3e}",
        cmp.case,
        cmp.oracle_welfare,
        cmp.run_welfare,
        cmp.relative_welfare_gap,
        cmp.max_angle_difference,
        cmp.max_price_difference
    );
    Ok(EXIT_OK)
}

fn report(run_dir: &Path) -> Result<i32, String> {
    let s = scenario::read_run_summary(run_dir).map_err(|e| e.to_string())?;
    println!("case:        {}", s.case);
    println!("status:      {} after {} iterations", s.status, s.iterations);
    if let Some(m) = &s.message {
        println!("message:     {m}");
    }
    println!("welfare J:   {:.9}", s.welfare);
    println!("dual phi:    {:.9}", s.dual_value);
    println!("gap:         {:.3e}", s.duality_gap);
    println!("|h|inf:      {:.3e} p.u.", s.h_inf);
    println!("prices:");
    for (label, (l, t)) in s.bus_labels.iter().zip(s.prices.iter().zip(&s.theta)) {
        println!("  bus {label:>3}  lambda = {l:.9}  theta = {t:+.6}");
    }
    let eq = &s.equilibrium;
    println!(
        "equilibrium: {} (balance {}, optimality {})",
        if eq.passed { "PASS" } else { "FAIL" },
        if eq.balance { "ok" } else { "violated" },
        if eq.optimality { "ok" } else { "violated" }
    );
    for v in &eq.violations {
        println!("  {v}");
    }
    Ok(EXIT_OK)
}
