use gridclear::agents::{
    AgentResponses, Bounds, BusProfiles, DistCo, ElasticLoadUnit, GenCo, GenerationUnit,
    QuadraticCost, QuadraticUtility,
};
use gridclear::consensus::ConsensusConfig;
use gridclear::market::{
    self, run_pricing_process, InitialPrice, MarketError, PricingConfig, RunStatus,
};
use gridclear::oracle::{centralized_solve_small, OracleConfig};
use gridclear::scenario::bundled_case;
use gridclear::transco::TransCo;
use gridclear::{Case, CaseDefaults, Line, Network, OperatingPoint};

fn two_bus(g: f64, loads: [f64; 2]) -> Case {
    let network = Network::new(2, vec![Line::new(0, 1, g, 8.0, 3.0).unwrap()], [1]).unwrap();
    let transcos = vec![TransCo::new("T1", &network, vec![0]).unwrap()];
    let gen = |bus| GenerationUnit {
        bus,
        bounds: Bounds::new(0.0, 200.0),
        cost: QuadraticCost { linear: 1.0, curvature: 0.01 },
    };
    let load = |bus: usize| ElasticLoadUnit {
        bus,
        bounds: Bounds::new(0.0, 200.0),
        utility: QuadraticUtility { linear: 1.5 + loads[bus], curvature: 0.01 },
    };
    Case {
        name: "two".into(),
        base_mva: 100.0,
        bus_labels: vec!["1".into(), "2".into()],
        network,
        transcos,
        distcos: vec![DistCo::new("D1", vec![load(0), load(1)], vec![]).unwrap()],
        gencos: vec![GenCo::new("G1", vec![gen(0), gen(1)]).unwrap()],
        defaults: CaseDefaults::default(),
        comments: Vec::new(),
    }
}

#[test]
fn welfare_examples() {
    let d = DistCo::new(
        "D",
        vec![ElasticLoadUnit {
            bus: 0,
            bounds: Bounds::new(0.0, 10.0),
            utility: QuadraticUtility { linear: 10.0, curvature: 2.0 },
        }],
        vec![],
    )
    .unwrap();
    let g = GenCo::new(
        "G",
        vec![GenerationUnit {
            bus: 0,
            bounds: Bounds::new(0.0, 10.0),
            cost: QuadraticCost { linear: 0.0, curvature: 2.0 },
        }],
    )
    .unwrap();
    let (ds, gs) = (vec![d], vec![g]);
    let at = |e: f64, p: f64| {
        let r = AgentResponses { distcos: vec![vec![e]], gencos: vec![vec![p]] };
        market::social_welfare(&ds, &gs, &r).unwrap()
    };
    assert_eq!(at(0.0, 0.0), 0.0);
    assert_eq!(at(2.0, 2.0), 12.0);
}

#[test]
fn one_bus_hessian_is_diagonal_curvatures() {
    let network = Network::new(1, vec![], [0]).unwrap();
    let case = Case {
        name: "one".into(),
        base_mva: 100.0,
        bus_labels: vec!["1".into()],
        network,
        transcos: vec![],
        distcos: vec![DistCo::new(
            "D",
            vec![ElasticLoadUnit {
                bus: 0,
                bounds: Bounds::new(0.0, 10.0),
                utility: QuadraticUtility { linear: 3.0, curvature: 2.0 },
            }],
            vec![],
        )
        .unwrap()],
        gencos: vec![GenCo::new(
            "G",
            vec![GenerationUnit {
                bus: 0,
                bounds: Bounds::new(0.0, 10.0),
                cost: QuadraticCost { linear: 1.0, curvature: 1.0 },
            }],
        )
        .unwrap()],
        defaults: CaseDefaults::default(),
        comments: Vec::new(),
    };
    let h = market::lagrangian_hessian(&case, &gridclear::PriceVector::uniform(1, 1.0));
    assert_eq!(h, nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-2.0, -1.0])));
}

#[test]
fn lossy_line_balances_at_root_angle() {
    // load of 1 p.u. at bus 2, angle from the 1-D balance root, generation covering losses
    let (b, g) = (5.0, 0.8);
    let line = Line::new(0, 1, g, b, 10.0).unwrap();
    let network = Network::new(2, vec![line.clone()], [1]).unwrap();
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if -line.flow(0.0, mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = OperatingPoint::new(&network, vec![0.5 * (lo + hi), 0.0]).unwrap();
    let profiles = BusProfiles {
        elastic: vec![0.0, 0.0],
        inelastic: vec![0.0, 1.0],
        generation: vec![network.bus_injection(&theta, 0), 0.0],
    };
    let h = market::mismatch(&network, &profiles, &theta, 1.0);
    assert!(h.inf_norm() <= 1e-6, "{:?}", h.per_unit);
    assert!(profiles.generation[0] > 1.0);
}

#[test]
fn one_bus_market_clears_at_closed_form() {
    let case = bundled_case("tiny_1bus");
    let run = run_pricing_process(
        &case,
        &PricingConfig::from_case(&case),
        &ConsensusConfig::from_case(&case),
    )
    .unwrap();
    assert!(run.converged());
    let lam = run.last.prices.as_slice()[0];
    let e = run.last.responses.distcos[0][0];
    let p = run.last.responses.gencos[0][0];
    assert!((lam - 14.0 / 3.0).abs() < 1e-6);
    assert!((e - 16.0 / 3.0).abs() < 1e-6);
    assert!((p - 22.0 / 3.0).abs() < 1e-6);
    assert!((p - e - 2.0).abs() < 1e-6);
}

#[test]
fn two_bus_prices_carry_the_loss_margin() {
    let case = bundled_case("tiny_2bus");
    let run = run_pricing_process(
        &case,
        &PricingConfig::from_case(&case),
        &ConsensusConfig::from_case(&case),
    )
    .unwrap();
    assert!(run.converged());
    let lam = run.last.prices.as_slice();
    assert!((lam[0] - 1.0).abs() < 1e-6, "{lam:?}");
    assert!((lam[1] - 1.020202).abs() < 1e-6, "{lam:?}");
    assert!(run.last.mismatch.inf_norm() < 1e-6);
    let oracle = centralized_solve_small(&case, &OracleConfig::default()).unwrap();
    for (a, b) in lam.iter().zip(&oracle.shadow_prices) {
        assert!((a - b).abs() < 1e-6);
    }
    assert!(oracle.welfare >= run.last.welfare - 1e-9);
}

#[test]
fn oracle_reference_values() {
    let cfg = OracleConfig::default();
    let one = centralized_solve_small(&bundled_case("tiny_1bus"), &cfg).unwrap();
    assert!((one.welfare - 55.0 / 3.0).abs() < 1e-8);
    assert!((one.shadow_prices[0] - 14.0 / 3.0).abs() < 1e-8);
    assert!((one.generation[0] - 22.0 / 3.0).abs() < 1e-8);

    let two = centralized_solve_small(&bundled_case("tiny_2bus"), &cfg).unwrap();
    assert!((two.welfare - -18.983428500866).abs() < 1e-9);
    assert!((two.theta.as_slice()[0] - 0.1).abs() < 1e-5);
    assert!((two.generation[0] - 100.5).abs() < 1e-6);
    assert!((two.elastic[1] - 79.5).abs() < 1e-6);

    let ring = centralized_solve_small(&bundled_case("ring4"), &cfg).unwrap();
    assert!((ring.welfare - -19.200119124924).abs() < 1e-8);
}

#[test]
fn oracle_grid_refinement_is_stable() {
    let coarse = OracleConfig::default();
    let fine = OracleConfig {
        coarse_step: coarse.coarse_step / 2.0,
        fine_step: coarse.fine_step / 2.0,
        ..coarse.clone()
    };
    for name in ["tiny_1bus", "tiny_2bus"] {
        let case = bundled_case(name);
        let a = centralized_solve_small(&case, &coarse).unwrap().welfare;
        let b = centralized_solve_small(&case, &fine).unwrap().welfare;
        assert!((a - b).abs() < 1e-5, "{name}: {a} vs {b}");
    }
}

#[test]
fn symmetric_buses_split_evenly() {
    let case = two_bus(1e-9, [0.0, 0.0]);
    let sol = centralized_solve_small(&case, &OracleConfig::default()).unwrap();
    assert!(sol.theta.as_slice()[0].abs() < 1e-5);
    assert!((sol.elastic[0] - sol.elastic[1]).abs() < 1e-6);
    assert!((sol.generation[0] - sol.generation[1]).abs() < 1e-6);
    assert!(sol.elastic[0] > 0.0 && sol.elastic[0] < 200.0);
}

#[test]
fn nonpositive_start_prices_are_rejected() {
    let case = bundled_case("tiny_2bus");
    let mut pricing = PricingConfig::from_case(&case);
    pricing.lambda0 = InitialPrice::Uniform(-1.0);
    let err = run_pricing_process(&case, &pricing, &ConsensusConfig::from_case(&case)).unwrap_err();
    assert!(matches!(err, MarketError::TransCo(_)), "{err}");
}

#[test]
fn iteration_limit_is_flagged() {
    let case = bundled_case("ieee14_mod");
    let mut pricing = PricingConfig::from_case(&case);
    pricing.max_outer_iters = 5;
    let run = run_pricing_process(&case, &pricing, &ConsensusConfig::from_case(&case)).unwrap();
    assert_eq!(run.status, RunStatus::IterationLimit);
    assert_eq!(run.trajectory.len(), 5);
}

#[test]
fn ieee14_mismatch_decays() {
    let case = bundled_case("ieee14_mod");
    let run = run_pricing_process(
        &case,
        &PricingConfig::from_case(&case),
        &ConsensusConfig::from_case(&case),
    )
    .unwrap();
    assert!(run.converged());
    let first = run.trajectory[0].h_inf;
    let last = run.trajectory.last().unwrap().h_inf;
    assert!(last < 1e-3 * first);
    assert!(run.trajectory.iter().all(|r| r.admm_converged));
}
