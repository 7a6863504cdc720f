//! The 14-bus market end to end: run, equilibrium check and CSV output.
//!
//! `cargo run --example ieee14_market -- out/ieee14` writes the trajectory
//! files into the given directory (a temporary one otherwise).

use std::path::PathBuf;

use gridclear::consensus::ConsensusConfig;
use gridclear::market::{run_pricing_process, verify_equilibrium, PricingConfig};
use gridclear::scenario::{bundled_case, write_trajectory};

pub fn run_example(out: Option<PathBuf>) -> Result<bool, Box<dyn std::error::Error>> {
    let case = bundled_case("ieee14_mod");
    let pricing = PricingConfig::from_case(&case);
    let consensus = ConsensusConfig::from_case(&case);
    let run = run_pricing_process(&case, &pricing, &consensus)?;
    let last = &run.last;

    println!(
        "{:?} after {} iterations, {} exchange rounds",
        run.status,
        run.iterations(),
        run.total_admm_rounds()
    );
    for bus in 0..case.network.bus_count() {
        println!(
            "bus {:>2}: lambda {:.6}  theta {:+.5}  h {:+.2e}",
            case.label(bus),
            last.prices.as_slice()[bus],
            last.theta.angle(bus),
            last.mismatch.per_unit[bus]
        );
    }
    println!("welfare {:.6}, dual {:.6}", last.welfare, last.dual_value);

    let report = verify_equilibrium(
        &case,
        &last.responses,
        &last.theta,
        &last.prices,
        pricing.mismatch_tol,
        &consensus.subproblem,
    );
    println!("equilibrium check passed: {}", report.passed());

    let dir = match out {
        Some(d) => d,
        None => std::env::temp_dir().join("gridclear-ieee14"),
    };
    write_trajectory(&run.trajectory, &dir)?;
    println!("trajectory written to {}", dir.display());
    Ok(run.converged() && report.passed())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example(std::env::args().nth(1).map(PathBuf::from)).map(|_| ())
}
