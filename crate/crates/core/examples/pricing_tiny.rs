//! Price iteration on the two-bus case next to the brute-force reference.

use gridclear::consensus::ConsensusConfig;
use gridclear::market::{run_pricing_process, PricingConfig};
use gridclear::oracle::{centralized_solve_small, OracleConfig};
use gridclear::scenario::bundled_case;

pub fn run_example() -> Result<(f64, f64), Box<dyn std::error::Error>> {
    let case = bundled_case("tiny_2bus");
    let run = run_pricing_process(
        &case,
        &PricingConfig::from_case(&case),
        &ConsensusConfig::from_case(&case),
    )?;
    for r in run.trajectory.iter().step_by(25) {
        println!(
            "t {:>4}  lambda {:?}  |h| {:.3e}  J {:.6}  phi {:.6}",
            r.t, r.prices, r.h_inf, r.welfare, r.dual_value
        );
    }
    let last = &run.last;
    println!("{:?} after {} iterations", run.status, run.iterations());
    println!("prices {:?}, duality gap {:.2e}", last.prices.as_slice(), last.duality_gap());

    let oracle = centralized_solve_small(&case, &OracleConfig::default())?;
    println!(
        "reference: J {:.9} at theta {:?}, shadow prices {:?}",
        oracle.welfare,
        oracle.theta.as_slice(),
        oracle.shadow_prices
    );
    println!("market:    J {:.9}", last.welfare);
    Ok((last.welfare, oracle.welfare))
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
