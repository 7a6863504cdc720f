//! How a load company and a generation company react as the price rises.

use gridclear::agents::{
    Bounds, DistCo, ElasticLoadUnit, GenCo, GenerationUnit, InelasticLoadUnit, PriceTaker,
    QuadraticCost, QuadraticUtility,
};
use gridclear::PriceVector;

pub fn run_example() -> Result<Vec<(f64, f64, f64)>, Box<dyn std::error::Error>> {
    let distco = DistCo::new(
        "D1",
        vec![ElasticLoadUnit {
            bus: 0,
            bounds: Bounds::new(0.0, 40.0),
            utility: QuadraticUtility { linear: 30.0, curvature: 1.0 },
        }],
        vec![InelasticLoadUnit { bus: 0, demand: 5.0 }],
    )?;
    let genco = GenCo::new(
        "G1",
        vec![GenerationUnit {
            bus: 0,
            bounds: Bounds::new(0.0, 50.0),
            cost: QuadraticCost { linear: 4.0, curvature: 0.5 },
        }],
    )?;

    let mut rows = Vec::new();
    println!("{:>6} {:>8} {:>8} {:>10} {:>10}", "price", "demand", "supply", "D surplus", "G surplus");
    for step in 0..=8 {
        let price = 4.0 + 3.0 * step as f64;
        let prices = PriceVector::uniform(1, price);
        let e = distco.respond(&prices)?;
        let p = genco.respond(&prices)?;
        println!(
            "{price:>6.1} {:>8.3} {:>8.3} {:>10.3} {:>10.3}",
            e[0],
            p[0],
            distco.surplus(&e, &prices)?,
            genco.surplus(&p, &prices)?
        );
        rows.push((price, e[0], p[0]));
    }
    Ok(rows)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
