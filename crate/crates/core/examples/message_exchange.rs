//! Two transmission companies agreeing on shared angles, checked against a
//! single joint solve.

use gridclear::consensus::{run_message_exchange, ConsensusConfig};
use gridclear::scenario::bundled_case;
use gridclear::transco::solve_joint;
use gridclear::PriceVector;

pub fn run_example() -> Result<f64, Box<dyn std::error::Error>> {
    let case = bundled_case("ring4");
    let prices = PriceVector::new(vec![0.998, 0.999, 1.017, 1.017]);
    let cfg = ConsensusConfig::default();
    let n = case.network.bus_count();

    let out = run_message_exchange(&case.transcos, n, &prices, &cfg, None)?;
    for (k, r) in out.trace.iter().enumerate().step_by((out.rounds / 8).max(1)) {
        println!("round {:>4}: r = {:.3e}  s = {:.3e}", k + 1, r.primal, r.dual);
    }
    println!("{} rounds, converged: {}", out.rounds, out.converged);

    let joint = solve_joint(&case.network, &prices, &cfg.subproblem)?;
    let mut worst: f64 = 0.0;
    for bus in 0..n {
        let (a, b) = (out.point.angle(bus), joint.angle(bus));
        worst = worst.max((a - b).abs());
        println!("bus {}: exchange {a:+.6}  joint {b:+.6}", case.label(bus));
    }
    println!("largest difference {worst:.2e} rad");
    Ok(worst)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
