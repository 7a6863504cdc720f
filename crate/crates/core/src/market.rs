//! The market operator: mismatch, dual accounting and the outer price loop.
//!
//! With `L(x, λ) = J(x) − λᵀh(x)` and `h = f(θ) − p + e + s`, the dual
//! function `φ(λ) = max_x L` splits into the agents' optimal surpluses. Its
//! gradient is `−h(x(λ))`, so descending on `φ` raises prices at buses
//! where demand and induced flow exceed generation.
//!
//! Unit levels are in MW and the grid in per-unit, so `h` is reported in
//! per-unit and `φ`, `J` in currency per hour.

use std::ops::Index;

use log::{info, warn};
use nalgebra::DMatrix;
use thiserror::Error;

use crate::agents::{self, AgentError, AgentResponses, BusProfiles, PriceTaker};
use crate::case::Case;
use crate::consensus::{self, ConsensusConfig, ConsensusError, ConsensusState, ResidualPair};
use crate::network::{Network, OperatingPoint};
use crate::transco::{self, SubproblemConfig, TransCoError};

/// Locational marginal prices, one per bus, in currency/MWh.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector(Vec<f64>);

impl PriceVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn uniform(bus_count: usize, level: f64) -> Self {
        Self(vec![level; bus_count])
    }

    pub fn get(&self, bus: usize) -> Option<f64> {
        self.0.get(bus).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Index<usize> for PriceVector {
    type Output = f64;

    fn index(&self, bus: usize) -> &f64 {
        &self.0[bus]
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    TransCo(#[from] TransCoError),
    #[error("price vector has {got} entries, network has {expected} buses")]
    PriceLength { expected: usize, got: usize },
    #[error("prices became non-finite at iteration {0}")]
    NonFinite(usize),
}

/// Bus power mismatch `h = f(θ) − p + e + s`, stored per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub per_unit: Vec<f64>,
    pub base_mva: f64,
}

impl Mismatch {
    pub fn mw(&self) -> Vec<f64> {
        self.per_unit.iter().map(|h| h * self.base_mva).collect()
    }

    pub fn inf_norm(&self) -> f64 {
        self.per_unit.iter().fold(0.0, |m, h| m.max(h.abs()))
    }

    pub fn two_norm(&self) -> f64 {
        self.per_unit.iter().map(|h| h * h).sum::<f64>().sqrt()
    }
}

pub fn mismatch(
    network: &Network,
    profiles: &BusProfiles,
    point: &OperatingPoint,
    base_mva: f64,
) -> Mismatch {
    let f = network.injections(point);
    let per_unit = (0..network.bus_count())
        .map(|n| {
            f[n] + (profiles.elastic[n] + profiles.inelastic[n] - profiles.generation[n]) / base_mva
        })
        .collect();
    Mismatch { per_unit, base_mva }
}

/// `∇φ(λ) = −h` in MW (currency per hour per currency/MWh).
pub fn dual_gradient(h: &Mismatch) -> Vec<f64> {
    h.mw().into_iter().map(|v| -v).collect()
}

/// `α_t = β / t`.
pub fn step_size(t: usize, beta: f64) -> f64 {
    assert!(t >= 1, "iterations count from 1");
    beta / t as f64
}

/// `λ − α·gradient`.
pub fn price_update(prices: &PriceVector, gradient: &[f64], alpha: f64) -> PriceVector {
    PriceVector(
        prices
            .as_slice()
            .iter()
            .zip(gradient)
            .map(|(l, g)| l - alpha * g)
            .collect(),
    )
}

/// `J = Σ u(e) − Σ c(p)` over every agent.
pub fn social_welfare(
    distcos: &[agents::DistCo],
    gencos: &[agents::GenCo],
    responses: &AgentResponses,
) -> Result<f64, AgentError> {
    let mut j = 0.0;
    for (d, levels) in distcos.iter().zip(&responses.distcos) {
        j += d.welfare(levels)?;
    }
    for (g, levels) in gencos.iter().zip(&responses.gencos) {
        j += g.welfare(levels)?;
    }
    Ok(j)
}

/// `J − λᵀh` with `h` in MW.
pub fn lagrangian_value(welfare: f64, prices: &PriceVector, h: &Mismatch) -> f64 {
    welfare
        - prices
            .as_slice()
            .iter()
            .zip(h.mw())
            .map(|(l, v)| l * v)
            .sum::<f64>()
}

/// Everything the operator learns at one price vector.
#[derive(Debug, Clone)]
pub struct DualEvaluation {
    pub prices: PriceVector,
    pub responses: AgentResponses,
    pub profiles: BusProfiles,
    pub theta: OperatingPoint,
    pub mismatch: Mismatch,
    pub welfare: f64,
    /// `φ(λ)`: the sum of every agent's optimal surplus.
    pub dual_value: f64,
    pub distco_surplus: Vec<f64>,
    pub genco_surplus: Vec<f64>,
    /// TransCo surpluses scaled to currency per hour.
    pub transco_surplus: Vec<f64>,
    pub admm_rounds: usize,
    pub admm_converged: bool,
    pub admm_trace: Vec<ResidualPair>,
    pub consensus: ConsensusState,
}

impl DualEvaluation {
    /// `φ(λ) − J(x)`, which equals `−λᵀh`.
    pub fn duality_gap(&self) -> f64 {
        self.dual_value - self.welfare
    }

    pub fn lagrangian(&self) -> f64 {
        lagrangian_value(self.welfare, &self.prices, &self.mismatch)
    }
}

/// Collects agent responses and the TransCo consensus at `prices`, then
/// sums realized surpluses into `φ(λ)`.
pub fn evaluate_dual(
    case: &Case,
    prices: &PriceVector,
    cfg: &ConsensusConfig,
    warm: Option<&ConsensusState>,
) -> Result<DualEvaluation, MarketError> {
    let n = case.network.bus_count();
    if prices.len() != n {
        return Err(MarketError::PriceLength {
            expected: n,
            got: prices.len(),
        });
    }
    let responses = agents::respond_all(&case.distcos, &case.gencos, prices)?;
    let profiles = agents::net_profiles(&case.distcos, &case.gencos, &responses, n);
    let exchange = consensus::run_message_exchange(&case.transcos, n, prices, cfg, warm)?;
    let theta = exchange.point.clone();
    let h = mismatch(&case.network, &profiles, &theta, case.base_mva);
    let welfare = social_welfare(&case.distcos, &case.gencos, &responses)?;

    let distco_surplus = case
        .distcos
        .iter()
        .zip(&responses.distcos)
        .map(|(d, e)| d.surplus(e, prices))
        .collect::<Result<Vec<_>, _>>()?;
    let genco_surplus = case
        .gencos
        .iter()
        .zip(&responses.gencos)
        .map(|(g, p)| g.surplus(p, prices))
        .collect::<Result<Vec<_>, _>>()?;
    let transco_surplus: Vec<f64> = case
        .transcos
        .iter()
        .map(|t| case.base_mva * t.merch_surplus(&t.region().restrict(theta.as_slice()), prices))
        .collect();
    let dual_value = distco_surplus.iter().sum::<f64>()
        + genco_surplus.iter().sum::<f64>()
        + transco_surplus.iter().sum::<f64>();

    Ok(DualEvaluation {
        prices: prices.clone(),
        responses,
        profiles,
        theta,
        mismatch: h,
        welfare,
        dual_value,
        distco_surplus,
        genco_surplus,
        transco_surplus,
        admm_rounds: exchange.rounds,
        admm_converged: exchange.converged,
        admm_trace: exchange.trace,
        consensus: exchange.state,
    })
}

/// `φ(λ)` alone.
pub fn dual_value(case: &Case, prices: &PriceVector, cfg: &ConsensusConfig) -> Result<f64, MarketError> {
    Ok(evaluate_dual(case, prices, cfg, None)?.dual_value)
}

/// Hessian of the Lagrangian in `(e, p, θ_free)`: utility curvatures, minus
/// cost curvatures and the network surplus block, in that order.
pub fn lagrangian_hessian(case: &Case, prices: &PriceVector) -> DMatrix<f64> {
    let mut diag: Vec<f64> = case
        .distcos
        .iter()
        .flat_map(|d| d.welfare_curvatures())
        .collect();
    diag.extend(case.gencos.iter().flat_map(|g| g.welfare_curvatures()));
    let m = transco::network_surplus_hessian(&case.network, prices) * case.base_mva;
    let k = diag.len();
    let dim = k + m.nrows();
    let mut h = DMatrix::zeros(dim, dim);
    for (i, v) in diag.into_iter().enumerate() {
        h[(i, i)] = v;
    }
    h.view_mut((k, k), (m.nrows(), m.ncols())).copy_from(&m);
    h
}

#[derive(Debug, Clone, PartialEq)]
pub enum EquilibriumViolation {
    /// Condition (i): some bus mismatch is not below the tolerance.
    Balance { bus: usize, mismatch: f64 },
    /// Condition (ii): an agent's re-solved response moved.
    Response { agent: String, unit: usize, change: f64 },
    /// Condition (ii): the jointly re-solved angles moved.
    Angle { bus: usize, change: f64 },
    /// Re-solving failed outright.
    Resolve { message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub max_mismatch: f64,
    pub max_response_change: f64,
    pub max_angle_change: f64,
    pub violations: Vec<EquilibriumViolation>,
}

impl EquilibriumReport {
    pub fn balance_holds(&self) -> bool {
        !self
            .violations
            .iter()
            .any(|v| matches!(v, EquilibriumViolation::Balance { .. }))
    }

    pub fn optimality_holds(&self) -> bool {
        self.violations
            .iter()
            .all(|v| matches!(v, EquilibriumViolation::Balance { .. }))
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Tolerance used when comparing re-solved responses and angles.
pub const RESOLVE_TOLERANCE: f64 = 1e-6;

/// Checks that `h` is below `eps` at every bus and that re-solving every
/// agent problem (and the joint angle problem) at `prices` reproduces `x`.
pub fn verify_equilibrium(
    case: &Case,
    responses: &AgentResponses,
    theta: &OperatingPoint,
    prices: &PriceVector,
    eps: f64,
    sub: &SubproblemConfig,
) -> EquilibriumReport {
    let mut violations = Vec::new();
    let n = case.network.bus_count();
    let profiles = agents::net_profiles(&case.distcos, &case.gencos, responses, n);
    let h = mismatch(&case.network, &profiles, theta, case.base_mva);
    for (bus, &v) in h.per_unit.iter().enumerate() {
        if !(v.abs() < eps) {
            violations.push(EquilibriumViolation::Balance { bus, mismatch: v });
        }
    }

    let mut max_response_change: f64 = 0.0;
    let mut compare = |agent: &str, old: &[f64], new: &[f64], out: &mut Vec<EquilibriumViolation>| {
        for (unit, (a, b)) in old.iter().zip(new).enumerate() {
            let change = (a - b).abs();
            max_response_change = max_response_change.max(change);
            if !(change <= RESOLVE_TOLERANCE) {
                out.push(EquilibriumViolation::Response {
                    agent: agent.to_string(),
                    unit,
                    change,
                });
            }
        }
    };
    match agents::respond_all(&case.distcos, &case.gencos, prices) {
        Ok(fresh) => {
            for (d, (old, new)) in case
                .distcos
                .iter()
                .zip(responses.distcos.iter().zip(&fresh.distcos))
            {
                compare(d.id(), old, new, &mut violations);
            }
            for (g, (old, new)) in case
                .gencos
                .iter()
                .zip(responses.gencos.iter().zip(&fresh.gencos))
            {
                compare(g.id(), old, new, &mut violations);
            }
        }
        Err(e) => violations.push(EquilibriumViolation::Resolve {
            message: e.to_string(),
        }),
    }

    let mut max_angle_change: f64 = 0.0;
    match transco::solve_joint(&case.network, prices, sub) {
        Ok(joint) => {
            for bus in 0..n {
                let change = (joint.angle(bus) - theta.angle(bus)).abs();
                max_angle_change = max_angle_change.max(change);
                if !(change <= RESOLVE_TOLERANCE) {
                    violations.push(EquilibriumViolation::Angle { bus, change });
                }
            }
        }
        Err(e) => violations.push(EquilibriumViolation::Resolve {
            message: e.to_string(),
        }),
    }

    EquilibriumReport {
        max_mismatch: h.inf_norm(),
        max_response_change,
        max_angle_change,
        violations,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialPrice {
    /// Mean generator marginal cost at mid-range output, floored at a small positive value.
    Auto,
    Uniform(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepScale {
    /// `1 / max(1, ‖∇φ(λ⁰)‖∞)`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingConfig {
    pub lambda0: InitialPrice,
    pub beta: StepScale,
    pub max_outer_iters: usize,
    /// Per-unit threshold on `‖h‖∞`.
    pub mismatch_tol: f64,
    pub warm_start: bool,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            lambda0: InitialPrice::Auto,
            beta: StepScale::Auto,
            max_outer_iters: 5000,
            mismatch_tol: 1e-3,
            warm_start: true,
        }
    }
}

impl PricingConfig {
    pub fn from_case(case: &Case) -> Self {
        let d = &case.defaults;
        Self {
            lambda0: d.lambda0.map_or(InitialPrice::Auto, InitialPrice::Uniform),
            beta: d.beta.map_or(StepScale::Auto, StepScale::Fixed),
            max_outer_iters: d.max_outer_iters,
            mismatch_tol: d.mismatch_tol,
            warm_start: true,
        }
    }
}

impl ConsensusConfig {
    pub fn from_case(case: &Case) -> Self {
        Self {
            rho: case.defaults.rho,
            eps_primal: case.defaults.eps_primal,
            eps_dual: case.defaults.eps_dual,
            ..Self::default()
        }
    }
}

/// Lowest starting price the automatic rule will return.
pub const MIN_INITIAL_PRICE: f64 = 1e-3;

pub fn initial_prices(case: &Case, rule: &InitialPrice) -> PriceVector {
    let n = case.network.bus_count();
    match rule {
        InitialPrice::Uniform(v) => PriceVector::uniform(n, *v),
        InitialPrice::Vector(v) => PriceVector::new(v.clone()),
        InitialPrice::Auto => {
            let costs: Vec<f64> = case
                .gencos
                .iter()
                .flat_map(|g| g.midpoint_marginal_costs())
                .collect();
            let mean = if costs.is_empty() {
                1.0
            } else {
                costs.iter().sum::<f64>() / costs.len() as f64
            };
            PriceVector::uniform(n, mean.max(MIN_INITIAL_PRICE))
        }
    }
}

/// One outer iteration of the price loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    pub prices: Vec<f64>,
    pub elastic: Vec<f64>,
    pub generation: Vec<f64>,
    pub theta: Vec<f64>,
    /// Per-unit.
    pub mismatch: Vec<f64>,
    pub h_inf: f64,
    pub h_two: f64,
    pub welfare: f64,
    pub dual_value: f64,
    pub distco_surplus: Vec<f64>,
    pub genco_surplus: Vec<f64>,
    pub transco_surplus: Vec<f64>,
    pub admm_rounds: usize,
    pub admm_converged: bool,
    pub admm_trace: Vec<ResidualPair>,
}

impl IterationRecord {
    fn from_eval(t: usize, e: &DualEvaluation) -> Self {
        Self {
            t,
            prices: e.prices.as_slice().to_vec(),
            elastic: e.profiles.elastic.clone(),
            generation: e.profiles.generation.clone(),
            theta: e.theta.as_slice().to_vec(),
            mismatch: e.mismatch.per_unit.clone(),
            h_inf: e.mismatch.inf_norm(),
            h_two: e.mismatch.two_norm(),
            welfare: e.welfare,
            dual_value: e.dual_value,
            distco_surplus: e.distco_surplus.clone(),
            genco_surplus: e.genco_surplus.clone(),
            transco_surplus: e.transco_surplus.clone(),
            admm_rounds: e.admm_rounds,
            admm_converged: e.admm_converged,
            admm_trace: e.admm_trace.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Converged,
    IterationLimit,
    /// Stopped early; the trajectory ends at the last good iterate.
    Aborted(String),
}

#[derive(Debug, Clone)]
pub struct PricingRun {
    pub status: RunStatus,
    pub beta: f64,
    pub trajectory: Vec<IterationRecord>,
    /// Evaluation at the last recorded iterate.
    pub last: DualEvaluation,
}

impl PricingRun {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    pub fn iterations(&self) -> usize {
        self.trajectory.len()
    }

    pub fn total_admm_rounds(&self) -> usize {
        self.trajectory.iter().map(|r| r.admm_rounds).sum()
    }
}

/// Broadcasts prices, gathers responses and angles, and moves prices along
/// the negative dual gradient with step `β/t` until `‖h‖∞` drops below the
/// tolerance or the iteration budget runs out.
pub fn run_pricing_process(
    case: &Case,
    pricing: &PricingConfig,
    consensus: &ConsensusConfig,
) -> Result<PricingRun, MarketError> {
    let mut prices = initial_prices(case, &pricing.lambda0);
    let bad = transco::check_price_sums(&case.network, &prices);
    if !bad.is_empty() {
        return Err(TransCoError::NonPositivePriceSum {
            transco: "initial prices".into(),
            lines: bad,
        }
        .into());
    }
    let mut eval = evaluate_dual(case, &prices, consensus, None)?;
    let beta = match pricing.beta {
        StepScale::Fixed(b) => b,
        StepScale::Auto => 1.0 / dual_gradient(&eval.mismatch).iter().fold(1.0_f64, |m, g| m.max(g.abs())),
    };
    info!(
        "pricing {}: lambda0 = {:.6}, beta = {:.6e}",
        case.name,
        prices.as_slice().first().copied().unwrap_or(0.0),
        beta
    );
    let mut trajectory = Vec::new();
    let mut t = 1;
    let status = loop {
        trajectory.push(IterationRecord::from_eval(t, &eval));
        let h_inf = eval.mismatch.inf_norm();
        if t % 50 == 0 || t == 1 {
            info!("t={t} |h|inf={h_inf:.3e} J={:.6} phi={:.6}", eval.welfare, eval.dual_value);
        }
        if h_inf < pricing.mismatch_tol {
            break RunStatus::Converged;
        }
        if t >= pricing.max_outer_iters {
            break RunStatus::IterationLimit;
        }
        let next = price_update(&prices, &dual_gradient(&eval.mismatch), step_size(t, beta));
        if !next.is_finite() {
            break RunStatus::Aborted(MarketError::NonFinite(t + 1).to_string());
        }
        let warm = pricing.warm_start.then_some(&eval.consensus);
        match evaluate_dual(case, &next, consensus, warm) {
            Ok(e) => {
                prices = next;
                eval = e;
                t += 1;
            }
            Err(e) => {
                warn!("aborting at iteration {}: {e}", t + 1);
                break RunStatus::Aborted(e.to_string());
            }
        }
    };
    Ok(PricingRun {
        status,
        beta,
        trajectory,
        last: eval,
    })
}
