//! Reference solutions for small cases and finite-difference checkers.
//!
//! `centralized_solve_small` grids the free angles, and at each grid point
//! the bus balance fixes each bus's net injection; the welfare-optimal split
//! of that injection among the bus's units is a one-dimensional water-filling
//! problem solved by bisection on the bus shadow price.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::case::Case;
use crate::consensus::ConsensusConfig;
use crate::market::{self, MarketError, PriceVector};
use crate::network::{BusId, OperatingPoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// First-pass grid spacing in radians; widened if the grid would exceed `max_grid_points`.
    pub coarse_step: f64,
    /// Refinement stops once the spacing is at or below this value.
    pub fine_step: f64,
    /// MW tolerance on each bus's balance in the allocation.
    pub bus_alloc_tolerance: f64,
    pub max_grid_points: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            coarse_step: 1e-3,
            fine_step: 1e-5,
            bus_alloc_tolerance: 1e-9,
            max_grid_points: 2_000_000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{free} free angles; the grid oracle handles at most 3")]
    TooManyAngles { free: usize },
    #[error("bus {bus} has no adjustable unit, so its balance cannot be met on a grid")]
    InflexibleBus { bus: BusId },
    #[error("no feasible grid point at spacing {step:e}")]
    NoFeasiblePoint { step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub theta: OperatingPoint,
    pub welfare: f64,
    /// Shadow price of each bus's balance at the optimum allocation.
    pub shadow_prices: Vec<f64>,
    pub elastic: Vec<f64>,
    pub generation: Vec<f64>,
    pub final_step: f64,
    pub grid_points: usize,
}

#[derive(Debug, Clone, Copy)]
enum Unit {
    Load { a: f64, b: f64, lo: f64, hi: f64 },
    Gen { c1: f64, c2: f64, lo: f64, hi: f64 },
}

impl Unit {
    /// Net injection (generation positive) at shadow price `mu`.
    fn net(&self, mu: f64) -> f64 {
        match *self {
            Unit::Load { a, b, lo, hi } => -((a - mu) / b).clamp(lo, hi),
            Unit::Gen { c1, c2, lo, hi } => ((mu - c1) / c2).clamp(lo, hi),
        }
    }

    fn net_range(&self) -> (f64, f64) {
        match *self {
            Unit::Load { lo, hi, .. } => (-hi, -lo),
            Unit::Gen { lo, hi, .. } => (lo, hi),
        }
    }

    /// Prices at which the unit sits at either end of its range.
    fn price_range(&self) -> (f64, f64) {
        match *self {
            Unit::Load { a, b, lo, hi } => (a - b * hi, a - b * lo),
            Unit::Gen { c1, c2, lo, hi } => (c1 + c2 * lo, c1 + c2 * hi),
        }
    }

    fn welfare(&self, level: f64) -> f64 {
        match *self {
            Unit::Load { a, b, .. } => a * level - 0.5 * b * level * level,
            Unit::Gen { c1, c2, .. } => -(c1 * level + 0.5 * c2 * level * level),
        }
    }
}

struct BusAllocation {
    welfare: f64,
    shadow: f64,
    elastic: f64,
    generation: f64,
}

/// Splits `target` MW of net injection among `units` to maximize welfare.
fn allocate(units: &[Unit], target: f64, tol: f64) -> Option<BusAllocation> {
    let (min, max) = units.iter().fold((0.0, 0.0), |(a, b), u| {
        let (lo, hi) = u.net_range();
        (a + lo, b + hi)
    });
    if target < min - tol || target > max + tol {
        return None;
    }
    let (mut lo, mut hi) = units.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), u| {
        let (l, h) = u.price_range();
        (a.min(l), b.max(h))
    });
    lo -= 1.0;
    hi += 1.0;
    let net = |mu: f64| units.iter().map(|u| u.net(mu)).sum::<f64>();
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..60 {
        mu = 0.5 * (lo + hi);
        let v = net(mu);
        if (v - target).abs() <= tol {
            break;
        }
        if v < target {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    let mut out = BusAllocation {
        welfare: 0.0,
        shadow: mu,
        elastic: 0.0,
        generation: 0.0,
    };
    for u in units {
        let level = u.net(mu);
        match u {
            Unit::Load { .. } => {
                out.elastic -= level;
                out.welfare += u.welfare(-level);
            }
            Unit::Gen { .. } => {
                out.generation += level;
                out.welfare += u.welfare(level);
            }
        }
    }
    Some(out)
}

struct Grid {
    free: Vec<BusId>,
    center: Vec<f64>,
    half_width: f64,
    step: f64,
}

impl Grid {
    fn per_axis(&self) -> usize {
        2 * (self.half_width / self.step).round() as usize + 1
    }

    fn size(&self) -> usize {
        self.per_axis().pow(self.free.len() as u32)
    }

    /// Grid point `idx` in lexicographic order, written into a full angle vector.
    fn point(&self, idx: usize, bus_count: usize) -> Vec<f64> {
        let k = self.per_axis();
        let mut theta = vec![0.0; bus_count];
        let mut rest = idx;
        for (d, &bus) in self.free.iter().enumerate().rev() {
            let i = rest % k;
            rest /= k;
            theta[bus] = self.center[d] - self.half_width + i as f64 * self.step;
        }
        theta
    }
}

struct Evaluated {
    idx: usize,
    welfare: f64,
    alloc: Vec<BusAllocation>,
    theta: Vec<f64>,
}

fn evaluate_point(
    case: &Case,
    units: &[Vec<Unit>],
    inelastic: &[f64],
    theta: Vec<f64>,
    tol: f64,
    idx: usize,
) -> Option<Evaluated> {
    if theta.iter().any(|t| t.abs() > std::f64::consts::PI) {
        return None;
    }
    for l in case.network.lines() {
        let (a, b) = l.endpoints();
        let (lo, hi) = l.angle_bounds();
        let d = theta[a] - theta[b];
        if d < lo || d > hi || l.flow(theta[a], theta[b]) > l.limit() || l.flow(theta[b], theta[a]) > l.limit() {
            return None;
        }
    }
    let point = OperatingPoint::unchecked(theta);
    let mut welfare = 0.0;
    let mut alloc = Vec::with_capacity(units.len());
    for (n, bus_units) in units.iter().enumerate() {
        let target = case.base_mva * case.network.bus_injection(&point, n) + inelastic[n];
        let a = allocate(bus_units, target, tol)?;
        welfare += a.welfare;
        alloc.push(a);
    }
    Some(Evaluated {
        idx,
        welfare,
        alloc,
        theta: point.into_vec(),
    })
}

fn better(a: Evaluated, b: Evaluated) -> Evaluated {
    if b.welfare > a.welfare || (b.welfare == a.welfare && b.idx < a.idx) {
        b
    } else {
        a
    }
}

/// Welfare-maximizing dispatch and angles by exhaustive grid search over the
/// free angles, followed by zoomed refinement passes around the incumbent.
pub fn centralized_solve_small(case: &Case, cfg: &OracleConfig) -> Result<OracleSolution, OracleError> {
    let n = case.network.bus_count();
    let free = case.network.free_buses();
    if free.len() > 3 {
        return Err(OracleError::TooManyAngles { free: free.len() });
    }
    let mut units = vec![Vec::new(); n];
    let mut inelastic = vec![0.0; n];
    for d in &case.distcos {
        for u in d.elastic_units() {
            units[u.bus].push(Unit::Load {
                a: u.utility.linear,
                b: u.utility.curvature,
                lo: u.bounds.min,
                hi: u.bounds.max,
            });
        }
        for u in d.inelastic_units() {
            inelastic[u.bus] += u.demand;
        }
    }
    for g in &case.gencos {
        for u in g.units() {
            units[u.bus].push(Unit::Gen {
                c1: u.cost.linear,
                c2: u.cost.curvature,
                lo: u.bounds.min,
                hi: u.bounds.max,
            });
        }
    }
    if let Some(bus) = units.iter().position(|u| u.is_empty()) {
        return Err(OracleError::InflexibleBus { bus });
    }

    let pi = std::f64::consts::PI;
    let mut step = cfg.coarse_step;
    if !free.is_empty() {
        let cap = (cfg.max_grid_points as f64).powf(1.0 / free.len() as f64);
        step = step.max(2.0 * pi / (cap - 1.0));
    }
    let mut grid = Grid {
        center: vec![0.0; free.len()],
        half_width: (pi / step).floor() * step,
        step,
        free,
    };
    let mut points = 0;
    let mut best: Option<Evaluated> = None;
    loop {
        let size = grid.size();
        points += size;
        let found = (0..size)
            .into_par_iter()
            .filter_map(|idx| {
                evaluate_point(
                    case,
                    &units,
                    &inelastic,
                    grid.point(idx, n),
                    cfg.bus_alloc_tolerance,
                    idx,
                )
            })
            .reduce_with(better);
        match (found, best.take()) {
            (Some(f), Some(b)) if b.welfare > f.welfare => best = Some(b),
            (Some(f), _) => best = Some(f),
            (None, b) => best = b,
        }
        let Some(ref inc) = best else {
            return Err(OracleError::NoFeasiblePoint { step: grid.step });
        };
        if grid.free.is_empty() || grid.step <= cfg.fine_step {
            break;
        }
        grid.center = grid.free.iter().map(|&b| inc.theta[b]).collect();
        grid.half_width = 2.0 * grid.step;
        grid.step = (grid.step / 10.0).max(cfg.fine_step);
    }
    let best = best.expect("incumbent exists");
    Ok(OracleSolution {
        welfare: best.welfare,
        shadow_prices: best.alloc.iter().map(|a| a.shadow).collect(),
        elastic: best.alloc.iter().map(|a| a.elastic).collect(),
        generation: best.alloc.iter().map(|a| a.generation).collect(),
        theta: OperatingPoint::unchecked(best.theta),
        final_step: grid.step,
        grid_points: points,
    })
}

/// Central differences of `φ` in each price, each probe running the agents
/// and a cold-started message exchange.
pub fn finite_diff_dual_gradient(
    case: &Case,
    prices: &PriceVector,
    delta: f64,
    cfg: &ConsensusConfig,
) -> Result<Vec<f64>, MarketError> {
    let base = prices.as_slice();
    (0..base.len())
        .map(|n| {
            let mut up = base.to_vec();
            let mut down = base.to_vec();
            up[n] += delta;
            down[n] -= delta;
            let hi = market::dual_value(case, &PriceVector::new(up), cfg)?;
            let lo = market::dual_value(case, &PriceVector::new(down), cfg)?;
            Ok((hi - lo) / (2.0 * delta))
        })
        .collect()
}

/// Symmetric second-difference approximation of the Hessian of `f` at `x`.
pub fn finite_diff_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], delta: f64) -> DMatrix<f64> {
    let k = x.len();
    let at = |moves: &[(usize, f64)]| {
        let mut p = x.to_vec();
        for &(i, d) in moves {
            p[i] += d;
        }
        f(&p)
    };
    let f0 = f(x);
    let mut h = DMatrix::zeros(k, k);
    for i in 0..k {
        h[(i, i)] = (at(&[(i, delta)]) - 2.0 * f0 + at(&[(i, -delta)])) / (delta * delta);
        for j in 0..i {
            let v = (at(&[(i, delta), (j, delta)]) - at(&[(i, delta), (j, -delta)])
                - at(&[(i, -delta), (j, delta)])
                + at(&[(i, -delta), (j, -delta)]))
                / (4.0 * delta * delta);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_equalizes_marginals() {
        let units = [
            Unit::Gen {
                c1: 1.0,
                c2: 1.0,
                lo: 0.0,
                hi: 10.0,
            },
            Unit::Load {
                a: 10.0,
                b: 1.0,
                lo: 0.0,
                hi: 10.0,
            },
        ];
        // p − e = 2 and 1 + p = 10 − e ⇒ p = 5.5, e = 3.5
        let a = allocate(&units, 2.0, 1e-12).unwrap();
        assert!((a.generation - 5.5).abs() < 1e-9);
        assert!((a.elastic - 3.5).abs() < 1e-9);
        assert!((a.shadow - 6.5).abs() < 1e-9);
        assert!(allocate(&units, 11.0, 1e-9).is_none());
    }

    #[test]
    fn hessian_of_a_quadratic() {
        let h = finite_diff_hessian(|x| x[0] * x[0] + 3.0 * x[0] * x[1] - 2.0 * x[1] * x[1], &[0.3, -0.2], 1e-4);
        assert!((h[(0, 0)] - 2.0).abs() < 1e-5);
        assert!((h[(0, 1)] - 3.0).abs() < 1e-5);
        assert!((h[(1, 1)] + 4.0).abs() < 1e-5);
    }
}
