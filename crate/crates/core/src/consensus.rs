//! Angle consensus among TransCos by ADMM message exchange.
//!
//! Each round every TransCo maximizes its augmented surplus against the
//! current consensus profile `z`, the mediator averages proposals at every
//! bus over that bus's owners, and each TransCo moves its dual profile by
//! `ρ·(θ^i − z^i)`. The exchange stops when the stacked primal residual
//! `θ^i − z^i` and dual residual `−ρ·(z^i − z^i_prev)` are both small.

use log::debug;
use rayon::prelude::*;
use thiserror::Error;

use crate::market::PriceVector;
use crate::network::{BusId, OperatingPoint};
use crate::transco::{SubproblemConfig, TransCo, TransCoError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error(transparent)]
    Subproblem(#[from] TransCoError),
    #[error("non-finite angle from {transco} at bus {bus} in round {round}")]
    NonFinite {
        transco: String,
        bus: BusId,
        round: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusConfig {
    pub rho: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub max_rounds: usize,
    pub subproblem: SubproblemConfig,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            rho: 0.21,
            eps_primal: 5e-5,
            eps_dual: 5e-6,
            max_rounds: 100_000,
            subproblem: SubproblemConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualPair {
    pub primal: f64,
    pub dual: f64,
}

impl ResidualPair {
    pub fn within(&self, cfg: &ConsensusConfig) -> bool {
        self.primal < cfg.eps_primal && self.dual < cfg.eps_dual
    }
}

/// Routes shared-bus angles between TransCos. Knows only which TransCos own
/// each bus, never their lines or limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Mediator {
    owners: Vec<Vec<usize>>,
    region_buses: Vec<Vec<BusId>>,
}

impl Mediator {
    pub fn new(bus_count: usize, transcos: &[TransCo]) -> Self {
        let mut owners = vec![Vec::new(); bus_count];
        let region_buses: Vec<Vec<BusId>> =
            transcos.iter().map(|t| t.region().buses().to_vec()).collect();
        for (i, buses) in region_buses.iter().enumerate() {
            for &b in buses {
                owners[b].push(i);
            }
        }
        Self {
            owners,
            region_buses,
        }
    }

    /// TransCos whose region contains `bus`.
    pub fn owners(&self, bus: BusId) -> &[usize] {
        &self.owners[bus]
    }

    /// Buses shared by TransCos `i` and `j`.
    pub fn shared_buses(&self, i: usize, j: usize) -> Vec<BusId> {
        self.region_buses[i]
            .iter()
            .copied()
            .filter(|b| self.owners[*b].contains(&j))
            .collect()
    }

    /// Mean of the proposals at every owned bus; unowned buses stay at zero.
    pub fn average(&self, proposals: &[Vec<f64>]) -> Vec<f64> {
        let mut z = vec![0.0; self.owners.len()];
        for (buses, theta) in self.region_buses.iter().zip(proposals) {
            for (&b, &v) in buses.iter().zip(theta) {
                z[b] += v;
            }
        }
        for (zb, o) in z.iter_mut().zip(&self.owners) {
            if !o.is_empty() {
                *zb /= o.len() as f64;
            }
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub round: usize,
    pub z: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub residuals: ResidualPair,
    primal: Vec<f64>,
    dual: Vec<f64>,
}

impl ConsensusState {
    /// `z = 0`, `y^i = 0`.
    pub fn cold(bus_count: usize, transcos: &[TransCo]) -> Self {
        let y: Vec<Vec<f64>> = transcos
            .iter()
            .map(|t| vec![0.0; t.region().buses().len()])
            .collect();
        Self {
            round: 0,
            z: vec![0.0; bus_count],
            theta: y.clone(),
            y,
            residuals: ResidualPair::default(),
            primal: Vec::new(),
            dual: Vec::new(),
        }
    }

    /// Keeps `z` and `y` from a previous exchange, resets the round counter.
    pub fn warm(&self) -> Self {
        Self {
            round: 0,
            residuals: ResidualPair::default(),
            primal: Vec::new(),
            dual: Vec::new(),
            ..self.clone()
        }
    }

    pub fn primal_residual(&self) -> &[f64] {
        &self.primal
    }

    pub fn dual_residual(&self) -> &[f64] {
        &self.dual
    }
}

/// Euclidean norms of the stacked residual vectors.
pub fn residual_norms(state: &ConsensusState) -> ResidualPair {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    ResidualPair {
        primal: norm(&state.primal),
        dual: norm(&state.dual),
    }
}

/// One propose / average / dual-update round.
pub fn exchange_round(
    state: &ConsensusState,
    transcos: &[TransCo],
    mediator: &Mediator,
    prices: &PriceVector,
    cfg: &ConsensusConfig,
) -> Result<ConsensusState, ConsensusError> {
    let round = state.round + 1;
    let proposals = transcos
        .par_iter()
        .zip(&state.y)
        .map(|(t, y)| {
            let z = t.region().restrict(&state.z);
            let sol = t.solve_subproblem(&z, y, cfg.rho, prices, &cfg.subproblem)?;
            if let Some(k) = sol.theta.iter().position(|v| !v.is_finite()) {
                return Err(ConsensusError::NonFinite {
                    transco: t.id().to_string(),
                    bus: t.region().buses()[k],
                    round,
                });
            }
            Ok(sol.theta)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let z = mediator.average(&proposals);
    let mut y = Vec::with_capacity(transcos.len());
    let mut primal = Vec::new();
    let mut dual = Vec::new();
    for ((t, theta), yi) in transcos.iter().zip(&proposals).zip(&state.y) {
        let buses = t.region().buses();
        let mut next = yi.clone();
        for (k, &b) in buses.iter().enumerate() {
            let r = theta[k] - z[b];
            next[k] += cfg.rho * r;
            primal.push(r);
            dual.push(-cfg.rho * (z[b] - state.z[b]));
        }
        y.push(next);
    }
    let mut out = ConsensusState {
        round,
        z,
        y,
        theta: proposals,
        residuals: ResidualPair::default(),
        primal,
        dual,
    };
    out.residuals = residual_norms(&out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeOutcome {
    pub point: OperatingPoint,
    pub rounds: usize,
    pub converged: bool,
    /// Residual norms after each round.
    pub trace: Vec<ResidualPair>,
    pub state: ConsensusState,
}

impl ExchangeOutcome {
    /// Largest disagreement between two owners of the same bus.
    pub fn max_disagreement(&self, transcos: &[TransCo]) -> f64 {
        let mut lo = vec![f64::INFINITY; self.state.z.len()];
        let mut hi = vec![f64::NEG_INFINITY; self.state.z.len()];
        for (t, theta) in transcos.iter().zip(&self.state.theta) {
            for (&b, &v) in t.region().buses().iter().zip(theta) {
                lo[b] = lo[b].min(v);
                hi[b] = hi[b].max(v);
            }
        }
        lo.iter()
            .zip(&hi)
            .filter(|(l, _)| l.is_finite())
            .map(|(l, h)| h - l)
            .fold(0.0, f64::max)
    }
}

/// Runs rounds until both residuals fall below their tolerances, starting
/// from `start` (or from zero) and always running at least one round.
pub fn run_message_exchange(
    transcos: &[TransCo],
    bus_count: usize,
    prices: &PriceVector,
    cfg: &ConsensusConfig,
    start: Option<&ConsensusState>,
) -> Result<ExchangeOutcome, ConsensusError> {
    let mediator = Mediator::new(bus_count, transcos);
    let mut state = match start {
        Some(s) => s.warm(),
        None => ConsensusState::cold(bus_count, transcos),
    };
    let mut trace = Vec::new();
    let converged = loop {
        state = exchange_round(&state, transcos, &mediator, prices, cfg)?;
        trace.push(state.residuals);
        if state.residuals.within(cfg) {
            break true;
        }
        if state.round >= cfg.max_rounds {
            break false;
        }
    };
    debug!(
        "exchange: {} rounds, r={:.3e}, s={:.3e}",
        state.round, state.residuals.primal, state.residuals.dual
    );
    Ok(ExchangeOutcome {
        point: OperatingPoint::unchecked(state.z.clone()),
        rounds: state.round,
        converged,
        trace,
        state,
    })
}
