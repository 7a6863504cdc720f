//! A single transmission company choosing angles for its lines at fixed prices.

use gridclear::transco::{SubproblemConfig, TransCo};
use gridclear::{Line, Network, PriceVector};

pub fn run_example() -> Result<Vec<f64>, Box<dyn std::error::Error>> {
    let network = Network::new(
        3,
        vec![Line::new(0, 1, 1.0, 10.0, 0.3)?, Line::new(1, 2, 1.0, 6.0, 2.0)?],
        [1],
    )?;
    let owner = TransCo::new("T1", &network, vec![0, 1])?;
    // bus 0 is cheap, bus 2 is expensive
    let prices = PriceVector::new(vec![0.9, 1.0, 1.2]);

    let hessian = owner.surplus_hessian(&prices);
    println!("surplus Hessian over free buses:\n{hessian:.4}");

    let zeros = vec![0.0; owner.region().buses().len()];
    let sol = owner.solve_subproblem(&zeros, &zeros, 0.0, &prices, &SubproblemConfig::default())?;
    for (&bus, theta) in owner.region().buses().iter().zip(&sol.theta) {
        println!("bus {bus}: theta {theta:+.6}");
    }
    let line = network.line(0);
    println!(
        "flow on 0-1: {:.6} (limit {}), constrained: {}",
        line.flow(sol.theta[0], sol.theta[1]),
        line.limit(),
        sol.constrained
    );
    println!(
        "surplus {:.6}, stationarity {:.1e}, Newton steps {}",
        owner.merch_surplus(&sol.theta, &prices),
        sol.stationarity,
        sol.newton_iters
    );
    Ok(sol.theta)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
