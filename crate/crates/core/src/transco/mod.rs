//! Transmission companies: line portfolios, merchandizing surplus and the
//! angle subproblem each one solves during the message exchange.
//!
//! A TransCo's surplus over its lines `E^i` is
//!
//! `Ψ_T^i(θ, λ) = Σ_{(n,m) ∈ E^i} (λ_m − λ_n)·B·Δ − (λ_n + λ_m)·½G·Δ²`,  `Δ = θ_n − θ_m`
//!
//! (each undirected line counted once), which sums over any partition of
//! the lines to `−Σ_n λ_n f_n(θ)`. It is a concave quadratic in the angles
//! whenever every line has `λ_n + λ_m > 0`.

mod barrier;

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use barrier::{BarrierFailure, BarrierSettings, ConcaveQp, QpSolution, ScalarConstraint};

use crate::market::PriceVector;
use crate::network::{BusId, Line, Network, OperatingPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransCoError {
    #[error("{transco}: no lines")]
    Empty { transco: String },
    #[error("{transco}: line index {line} does not exist")]
    UnknownLine { transco: String, line: usize },
    #[error("{transco}: region holds {count} slack buses, expected exactly one")]
    SlackCount { transco: String, count: usize },
    #[error(
        "{transco}: price sums are not positive on lines {lines:?}; \
         raise the initial price level or lower the step scale"
    )]
    NonPositivePriceSum { transco: String, lines: Vec<usize> },
    #[error("{transco}: surplus is not strictly concave in the free angles")]
    NotConcave { transco: String },
    #[error("{transco}: no strictly feasible starting angles")]
    NoInteriorPoint { transco: String },
    #[error("{transco}: Newton stalled with gradient norm {gradient_norm:e} at barrier weight {weight:e}")]
    NewtonFailure {
        transco: String,
        gradient_norm: f64,
        weight: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubproblemConfig {
    pub inner_tolerance: f64,
    pub max_newton_iters: usize,
    pub barrier_decrease: f64,
    pub initial_barrier: f64,
}

impl Default for SubproblemConfig {
    fn default() -> Self {
        Self {
            inner_tolerance: 1e-9,
            max_newton_iters: 100,
            barrier_decrease: 0.2,
            initial_barrier: 1.0,
        }
    }
}

impl SubproblemConfig {
    fn barrier(&self) -> BarrierSettings {
        BarrierSettings {
            tolerance: self.inner_tolerance,
            max_newton_iters: self.max_newton_iters,
            decrease: self.barrier_decrease,
            initial_weight: self.initial_barrier,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    /// Angles on the region buses, in region order.
    pub theta: Vec<f64>,
    pub newton_iters: usize,
    /// `‖∇ − Σν∇c‖∞` of the limit-constrained problem at the returned point.
    pub stationarity: f64,
    /// `max |ν·c|`.
    pub complementarity: f64,
    /// Whether any line limit, angle bound or box carries a nonzero multiplier.
    pub constrained: bool,
}

/// A set of lines, the buses they touch and which of those are pinned at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    line_ids: Vec<usize>,
    lines: Vec<Line>,
    buses: Vec<BusId>,
    local: Vec<(BusId, usize)>,
    pinned: Vec<bool>,
    var_of: Vec<Option<usize>>,
}

impl Region {
    /// Lines are copied out of `network`; slack buses in the region are pinned.
    pub fn new(network: &Network, line_ids: Vec<usize>) -> Self {
        let mut set = BTreeSet::new();
        let lines: Vec<Line> = line_ids
            .iter()
            .map(|&i| {
                let l = network.line(i).clone();
                let (a, b) = l.endpoints();
                set.insert(a);
                set.insert(b);
                l
            })
            .collect();
        let mut buses: Vec<BusId> = set.into_iter().collect();
        if buses.is_empty() {
            buses = network.slack_set().iter().take(1).copied().collect();
        }
        let pinned: Vec<bool> = buses.iter().map(|&b| network.is_slack(b)).collect();
        let mut next = 0;
        let var_of = pinned
            .iter()
            .map(|&p| {
                if p {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect();
        let local = buses.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        Self {
            line_ids,
            lines,
            buses,
            local,
            pinned,
            var_of,
        }
    }

    /// Every line of the network.
    pub fn whole(network: &Network) -> Self {
        Self::new(network, (0..network.lines().len()).collect())
    }

    pub fn line_ids(&self) -> &[usize] {
        &self.line_ids
    }

    pub fn buses(&self) -> &[BusId] {
        &self.buses
    }

    pub fn slack_buses(&self) -> Vec<BusId> {
        self.buses
            .iter()
            .zip(&self.pinned)
            .filter(|(_, &p)| p)
            .map(|(&b, _)| b)
            .collect()
    }

    /// Region-local index of `bus`.
    pub fn position(&self, bus: BusId) -> Option<usize> {
        self.local
            .binary_search_by_key(&bus, |&(b, _)| b)
            .ok()
            .map(|k| self.local[k].1)
    }

    pub fn free_count(&self) -> usize {
        self.var_of.iter().filter(|v| v.is_some()).count()
    }

    /// Region-local angles read from a full network profile.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.buses.iter().map(|&b| full[b]).collect()
    }

    fn endpoints_local(&self, line: &Line) -> (usize, usize) {
        let (a, b) = line.endpoints();
        (
            self.position(a).expect("line endpoint in region"),
            self.position(b).expect("line endpoint in region"),
        )
    }

    /// `Ψ` over the region's lines at region-local angles.
    pub fn surplus(&self, theta: &[f64], prices: &PriceVector) -> f64 {
        let lam = prices.as_slice();
        self.lines
            .iter()
            .map(|l| {
                let (a, b) = l.endpoints();
                let (i, j) = self.endpoints_local(l);
                (lam[b] - lam[a]) * l.dc_component(theta[i], theta[j])
                    - (lam[a] + lam[b]) * l.loss_component(theta[i], theta[j])
            })
            .sum()
    }

    /// Lines whose endpoint prices do not sum to a positive value.
    pub fn price_sum_violations(&self, prices: &PriceVector) -> Vec<usize> {
        let lam = prices.as_slice();
        self.line_ids
            .iter()
            .zip(&self.lines)
            .filter(|(_, l)| {
                let (a, b) = l.endpoints();
                !(lam[a] + lam[b] > 0.0)
            })
            .map(|(&i, _)| i)
            .collect()
    }

    /// Gradient and Hessian of `Ψ` in the free angles (constant Hessian).
    fn surplus_quadratic(&self, prices: &PriceVector) -> (DVector<f64>, DMatrix<f64>) {
        let lam = prices.as_slice();
        let k = self.free_count();
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        for l in &self.lines {
            let (a, b) = l.endpoints();
            let (i, j) = self.endpoints_local(l);
            let (vi, vj) = (self.var_of[i], self.var_of[j]);
            let c = (lam[b] - lam[a]) * l.susceptance();
            let w = (lam[a] + lam[b]) * l.conductance();
            if let Some(p) = vi {
                g[p] += c;
                h[(p, p)] -= w;
            }
            if let Some(q) = vj {
                g[q] -= c;
                h[(q, q)] -= w;
            }
            if let (Some(p), Some(q)) = (vi, vj) {
                h[(p, q)] += w;
                h[(q, p)] += w;
            }
        }
        (g, h)
    }

    /// Hessian of `Ψ` with respect to the free angles in ascending bus order.
    pub fn surplus_hessian(&self, prices: &PriceVector) -> DMatrix<f64> {
        self.surplus_quadratic(prices).1
    }

    fn constraints(&self) -> Vec<ScalarConstraint> {
        let mut out = Vec::with_capacity(4 * self.lines.len() + 2 * self.free_count());
        for l in &self.lines {
            let (i, j) = self.endpoints_local(l);
            let (plus, minus) = (self.var_of[i], self.var_of[j]);
            let (g, b, k) = (l.conductance(), l.susceptance(), l.limit());
            let (lo, hi) = l.angle_bounds();
            let mut push = |quad, lin, constant| {
                out.push(ScalarConstraint {
                    plus,
                    minus,
                    quad,
                    lin,
                    constant,
                })
            };
            push(g, b, -k);
            push(g, -b, -k);
            push(0.0, 1.0, -hi);
            push(0.0, -1.0, lo);
        }
        for v in 0..self.free_count() {
            for sign in [1.0, -1.0] {
                out.push(ScalarConstraint {
                    plus: Some(v),
                    minus: None,
                    quad: 0.0,
                    lin: sign,
                    constant: -PI,
                });
            }
        }
        out
    }

    /// `Ψ(θ) − yᵀ(θ − z) − ρ/2·‖θ − z‖²` as a QP in the free angles.
    fn augmented_qp(&self, prices: &PriceVector, z: &[f64], y: &[f64], rho: f64) -> ConcaveQp {
        let (mut g, mut h) = self.surplus_quadratic(prices);
        for (i, v) in self.var_of.iter().enumerate() {
            if let Some(p) = *v {
                g[p] += rho * z[i] - y[i];
                h[(p, p)] -= rho;
            }
        }
        ConcaveQp {
            linear: g,
            hessian: h,
            constraints: self.constraints(),
        }
    }

    pub fn augmented_objective(
        &self,
        theta: &[f64],
        z: &[f64],
        y: &[f64],
        rho: f64,
        prices: &PriceVector,
    ) -> f64 {
        let mut v = self.surplus(theta, prices);
        for i in 0..self.buses.len() {
            let d = theta[i] - z[i];
            v -= y[i] * d + 0.5 * rho * d * d;
        }
        v
    }

    /// Maximizes the augmented objective over the region's feasible angles.
    /// `z` and `y` are region-local; slack entries are ignored.
    pub fn solve(
        &self,
        name: &str,
        z: &[f64],
        y: &[f64],
        rho: f64,
        prices: &PriceVector,
        cfg: &SubproblemConfig,
    ) -> Result<SubproblemSolution, TransCoError> {
        let bad = self.price_sum_violations(prices);
        if !bad.is_empty() {
            return Err(TransCoError::NonPositivePriceSum {
                transco: name.to_string(),
                lines: bad,
            });
        }
        let qp = self.augmented_qp(prices, z, y, rho);
        let start = DVector::from_iterator(
            self.free_count(),
            self.var_of
                .iter()
                .zip(z)
                .filter(|(v, _)| v.is_some())
                .map(|(_, &zi)| zi.clamp(-PI, PI)),
        );
        let sol = qp.solve(start, &cfg.barrier()).map_err(|e| match e {
            BarrierFailure::NotNegativeDefinite => TransCoError::NotConcave {
                transco: name.to_string(),
            },
            BarrierFailure::NoInteriorPoint => TransCoError::NoInteriorPoint {
                transco: name.to_string(),
            },
            BarrierFailure::Newton {
                gradient_norm,
                weight,
            } => TransCoError::NewtonFailure {
                transco: name.to_string(),
                gradient_norm,
                weight,
            },
        })?;
        let (stationarity, complementarity) = qp.kkt_residuals(&sol.x, &sol.multipliers);
        let theta = self
            .var_of
            .iter()
            .map(|v| v.map_or(0.0, |p| sol.x[p]))
            .collect();
        Ok(SubproblemSolution {
            theta,
            newton_iters: sol.newton_iters,
            stationarity,
            complementarity,
            constrained: sol.weight > 0.0,
        })
    }
}

/// A transmission company owning a set of lines with exactly one slack bus
/// among their endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TransCo {
    id: String,
    region: Region,
    slack: BusId,
}

impl TransCo {
    pub fn new(
        id: impl Into<String>,
        network: &Network,
        line_ids: Vec<usize>,
    ) -> Result<Self, TransCoError> {
        let id = id.into();
        if line_ids.is_empty() {
            return Err(TransCoError::Empty { transco: id });
        }
        if let Some(&line) = line_ids.iter().find(|&&i| i >= network.lines().len()) {
            return Err(TransCoError::UnknownLine { transco: id, line });
        }
        let region = Region::new(network, line_ids);
        let slacks = region.slack_buses();
        if slacks.len() != 1 {
            return Err(TransCoError::SlackCount {
                transco: id,
                count: slacks.len(),
            });
        }
        Ok(Self {
            id,
            slack: slacks[0],
            region,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn slack_bus(&self) -> BusId {
        self.slack
    }

    /// `Ψ_T^i` at region-local angles.
    pub fn merch_surplus(&self, theta: &[f64], prices: &PriceVector) -> f64 {
        self.region.surplus(theta, prices)
    }

    pub fn augmented_objective(
        &self,
        theta: &[f64],
        z: &[f64],
        y: &[f64],
        rho: f64,
        prices: &PriceVector,
    ) -> f64 {
        self.region.augmented_objective(theta, z, y, rho, prices)
    }

    pub fn solve_subproblem(
        &self,
        z: &[f64],
        y: &[f64],
        rho: f64,
        prices: &PriceVector,
        cfg: &SubproblemConfig,
    ) -> Result<SubproblemSolution, TransCoError> {
        self.region.solve(&self.id, z, y, rho, prices, cfg)
    }

    /// Dimension `|N_T^i| − 1`, free buses in ascending order.
    pub fn surplus_hessian(&self, prices: &PriceVector) -> DMatrix<f64> {
        self.region.surplus_hessian(prices)
    }
}

/// Both sides of the surplus identity: the sum over TransCos and
/// `−Σ_n λ_n f_n(θ)` evaluated from injections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurplusTotals {
    pub by_transco: f64,
    pub from_injections: f64,
}

pub fn total_merch_surplus(
    network: &Network,
    transcos: &[TransCo],
    point: &OperatingPoint,
    prices: &PriceVector,
) -> SurplusTotals {
    let theta = point.as_slice();
    let by_transco = transcos
        .iter()
        .map(|t| t.merch_surplus(&t.region.restrict(theta), prices))
        .sum();
    let from_injections = -network
        .injections(point)
        .iter()
        .zip(prices.as_slice())
        .map(|(f, l)| f * l)
        .sum::<f64>();
    SurplusTotals {
        by_transco,
        from_injections,
    }
}

/// Lines of the network with `λ_n + λ_m ≤ 0`.
pub fn check_price_sums(network: &Network, prices: &PriceVector) -> Vec<usize> {
    let lam = prices.as_slice();
    network
        .lines()
        .iter()
        .enumerate()
        .filter(|(_, l)| {
            let (a, b) = l.endpoints();
            !(lam[a] + lam[b] > 0.0)
        })
        .map(|(i, _)| i)
        .collect()
}

/// Maximizes the total surplus over all lines jointly, with every slack bus
/// pinned and no consensus terms.
pub fn solve_joint(
    network: &Network,
    prices: &PriceVector,
    cfg: &SubproblemConfig,
) -> Result<OperatingPoint, TransCoError> {
    let region = Region::whole(network);
    let zeros = vec![0.0; region.buses().len()];
    let sol = region.solve("joint", &zeros, &zeros, 0.0, prices, cfg)?;
    let mut theta = vec![0.0; network.bus_count()];
    for (&b, &v) in region.buses().iter().zip(&sol.theta) {
        theta[b] = v;
    }
    Ok(OperatingPoint::unchecked(theta))
}

/// Surplus Hessian over the whole network with every slack row and column removed.
pub fn network_surplus_hessian(network: &Network, prices: &PriceVector) -> DMatrix<f64> {
    Region::whole(network).surplus_hessian(prices)
}
