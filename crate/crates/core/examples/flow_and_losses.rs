//! Line flows under the lossy DC model and what they add up to at each bus.

use gridclear::{Line, Network, OperatingPoint};

pub fn run_example() -> Result<f64, Box<dyn std::error::Error>> {
    let lines = vec![
        Line::new(0, 1, 1.0, 10.0, 2.0)?,
        Line::new(1, 2, 0.5, 8.0, 2.0)?,
        Line::new(0, 2, 2.0, 5.0, 2.0)?,
    ];
    let network = Network::new(3, lines, [0])?;
    let theta = OperatingPoint::new(&network, vec![0.0, -0.05, -0.08])?;

    for line in network.lines() {
        let (a, b) = line.endpoints();
        let (ta, tb) = (theta.angle(a), theta.angle(b));
        println!(
            "line {a}-{b}: forward {:+.6}  reverse {:+.6}  loss {:.6}",
            line.flow(ta, tb),
            line.flow(tb, ta),
            line.line_loss(ta, tb)
        );
    }
    let injections = network.injections(&theta);
    for (bus, f) in injections.iter().enumerate() {
        println!("bus {bus}: injection {f:+.6} p.u.");
    }
    let losses = network.total_losses(&theta);
    println!("sum of injections {:.6}, total losses {losses:.6}", injections.iter().sum::<f64>());
    Ok(losses)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
