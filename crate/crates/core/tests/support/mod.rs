#![allow(dead_code)]

use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use gridclear::agents::{
    Bounds, DistCo, ElasticLoadUnit, GenCo, GenerationUnit, InelasticLoadUnit, QuadraticCost,
    QuadraticUtility,
};
use gridclear::transco::TransCo;
use gridclear::{Case, CaseDefaults, Line, Network, PriceVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_line(rng: &mut ChaCha8Rng, a: usize, b: usize) -> Line {
    Line::new(
        a,
        b,
        rng.gen_range(0.5..5.0),
        rng.gen_range(2.0..20.0),
        rng.gen_range(0.5..5.0),
    )
    .unwrap()
}

pub fn random_prices(rng: &mut ChaCha8Rng, n: usize) -> PriceVector {
    PriceVector::new((0..n).map(|_| rng.gen_range(0.5..1.5)).collect())
}

pub fn random_angles(rng: &mut ChaCha8Rng, network: &Network) -> Vec<f64> {
    (0..network.bus_count())
        .map(|b| {
            if network.is_slack(b) {
                0.0
            } else {
                rng.gen_range(-0.5..0.5)
            }
        })
        .collect()
}

/// Connected network split among TransCos, one slack per region. Regions
/// are grown as trees from their slack bus and joined by lines between
/// non-slack buses.
pub struct RandomGrid {
    pub network: Network,
    pub partition: Vec<Vec<usize>>,
    pub transcos: Vec<TransCo>,
}

pub fn random_grid(
    rng: &mut ChaCha8Rng,
    buses: RangeInclusive<usize>,
    regions: RangeInclusive<usize>,
) -> RandomGrid {
    let k = rng.gen_range(regions);
    let n = rng.gen_range(buses).max(2 * k);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let slacks = &order[..k];
    let mut members: Vec<Vec<usize>> = slacks.iter().map(|&s| vec![s]).collect();
    for (i, &b) in order[k..].iter().enumerate() {
        let r = if i < k { i } else { rng.gen_range(0..k) };
        members[r].push(b);
    }

    let mut seen = BTreeSet::new();
    let mut lines = Vec::new();
    let mut partition = vec![Vec::new(); k];
    let mut add = |rng: &mut ChaCha8Rng, a: usize, b: usize, owner: usize| {
        if seen.insert((a.min(b), a.max(b))) {
            partition[owner].push(lines.len());
            lines.push(random_line(rng, a, b));
        }
    };
    for (r, m) in members.iter().enumerate() {
        for i in 1..m.len() {
            let j = rng.gen_range(0..i);
            add(rng, m[i], m[j], r);
        }
        if m.len() > 2 && rng.gen_bool(0.5) {
            let i = rng.gen_range(0..m.len());
            let j = rng.gen_range(0..m.len());
            if i != j {
                add(rng, m[i], m[j], r);
            }
        }
    }
    for r in 1..k {
        let other = rng.gen_range(0..r);
        let a = *members[r][1..].choose(rng).unwrap();
        let b = *members[other][1..].choose(rng).unwrap();
        let owner = if rng.gen_bool(0.5) { r } else { other };
        add(rng, a, b, owner);
    }

    let network = Network::new(n, lines, slacks.iter().copied()).unwrap();
    let transcos = partition
        .iter()
        .enumerate()
        .map(|(i, ids)| TransCo::new(format!("T{}", i + 1), &network, ids.clone()).unwrap())
        .collect();
    RandomGrid {
        network,
        partition,
        transcos,
    }
}

/// A random grid with one GenCo and one DistCo holding a unit at random buses.
pub fn random_case(
    rng: &mut ChaCha8Rng,
    buses: RangeInclusive<usize>,
    regions: RangeInclusive<usize>,
) -> Case {
    let grid = random_grid(rng, buses, regions);
    let n = grid.network.bus_count();
    let gen_buses: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
    let gen_units = gen_buses
        .into_iter()
        .map(|bus| GenerationUnit {
            bus,
            bounds: Bounds::new(0.0, 300.0),
            cost: QuadraticCost {
                linear: rng.gen_range(0.9..1.1),
                curvature: rng.gen_range(1e-4..1e-2),
            },
        })
        .collect::<Vec<_>>();
    let load_buses: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
    let elastic = load_buses
        .into_iter()
        .map(|bus| ElasticLoadUnit {
            bus,
            bounds: Bounds::new(0.0, 300.0),
            utility: QuadraticUtility {
                linear: rng.gen_range(1.0..1.3),
                curvature: rng.gen_range(1e-4..1e-2),
            },
        })
        .collect::<Vec<_>>();
    let inelastic = vec![InelasticLoadUnit {
        bus: rng.gen_range(0..n),
        demand: rng.gen_range(1.0..20.0),
    }];
    Case {
        name: "random".into(),
        base_mva: 100.0,
        bus_labels: (1..=n).map(|b| b.to_string()).collect(),
        network: grid.network,
        transcos: grid.transcos,
        distcos: vec![DistCo::new("D1", elastic, inelastic).unwrap()],
        gencos: vec![GenCo::new("G1", gen_units).unwrap()],
        defaults: CaseDefaults::default(),
        comments: Vec::new(),
    }
}
