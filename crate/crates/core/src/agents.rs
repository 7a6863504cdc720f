//! DistCo and GenCo portfolios and their price responses.
//!
//! Each unit is a price taker with a strictly concave utility (loads) or a
//! strictly convex cost (generators). With quadratic forms the surplus
//! maximizer is the unconstrained stationary point clamped to the unit's box.
//! Coefficients stay private to the agent; the market side only sees
//! responses, surpluses and the second derivatives it needs for the
//! Lagrangian Hessian.

use thiserror::Error;

use crate::market::PriceVector;
use crate::network::BusId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("{agent}: bus {bus} has no price (price vector has {len} entries)")]
    UnknownBus {
        agent: String,
        bus: BusId,
        len: usize,
    },
    #[error("{agent}: bounds [{min}, {max}] at bus {bus} are invalid")]
    Bounds {
        agent: String,
        bus: BusId,
        min: f64,
        max: f64,
    },
    #[error("{agent}: curvature at bus {bus} must be strictly positive (got {value})")]
    Curvature {
        agent: String,
        bus: BusId,
        value: f64,
    },
    #[error("{agent}: {what} at bus {bus} must be non-negative and finite (got {value})")]
    Negative {
        agent: String,
        bus: BusId,
        what: &'static str,
        value: f64,
    },
    #[error("{agent}: more than one {kind} unit at bus {bus}")]
    DuplicateUnit {
        agent: String,
        bus: BusId,
        kind: &'static str,
    },
    #[error("{agent}: profile has {got} levels, portfolio has {expected} units")]
    ProfileLength {
        agent: String,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }

    fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min <= self.max
    }
}

/// `u(e) = a·e − ½·b·e²` with `b > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticUtility {
    pub linear: f64,
    pub curvature: f64,
}

impl QuadraticUtility {
    pub fn value(&self, e: f64) -> f64 {
        self.linear * e - 0.5 * self.curvature * e * e
    }

    pub fn marginal(&self, e: f64) -> f64 {
        self.linear - self.curvature * e
    }

    /// Maximizer of `u(e) − price·e` over `bounds`.
    pub fn response(&self, price: f64, bounds: Bounds) -> f64 {
        bounds.clamp((self.linear - price) / self.curvature)
    }
}

/// `c(p) = c1·p + ½·c2·p²` with `c2 > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCost {
    pub linear: f64,
    pub curvature: f64,
}

impl QuadraticCost {
    pub fn value(&self, p: f64) -> f64 {
        self.linear * p + 0.5 * self.curvature * p * p
    }

    pub fn marginal(&self, p: f64) -> f64 {
        self.linear + self.curvature * p
    }

    /// Maximizer of `price·p − c(p)` over `bounds`.
    pub fn response(&self, price: f64, bounds: Bounds) -> f64 {
        bounds.clamp((price - self.linear) / self.curvature)
    }
}

/// Maximizes a concave scalar function on `[lo, hi]` given its derivative,
/// which must be nonincreasing. Bisects on the sign of the derivative until
/// the bracket is narrower than `tol`.
///
/// This is the response path for non-quadratic utilities and costs; the
/// quadratic types above use their closed forms.
pub fn argmax_concave(derivative: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    if lo >= hi {
        return lo;
    }
    if derivative(lo) <= 0.0 {
        return lo;
    }
    if derivative(hi) >= 0.0 {
        return hi;
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if derivative(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticLoadUnit {
    pub bus: BusId,
    pub bounds: Bounds,
    pub utility: QuadraticUtility,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InelasticLoadUnit {
    pub bus: BusId,
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationUnit {
    pub bus: BusId,
    pub bounds: Bounds,
    pub cost: QuadraticCost,
}

fn price_at(agent: &str, prices: &PriceVector, bus: BusId) -> Result<f64, AgentError> {
    prices.get(bus).ok_or_else(|| AgentError::UnknownBus {
        agent: agent.to_string(),
        bus,
        len: prices.len(),
    })
}

fn check_len(agent: &str, expected: usize, got: usize) -> Result<(), AgentError> {
    if expected != got {
        return Err(AgentError::ProfileLength {
            agent: agent.to_string(),
            expected,
            got,
        });
    }
    Ok(())
}

/// An agent that reacts to posted prices by maximizing its own surplus.
pub trait PriceTaker {
    fn id(&self) -> &str;

    /// Surplus-maximizing levels, one per unit in portfolio order.
    fn respond(&self, prices: &PriceVector) -> Result<Vec<f64>, AgentError>;

    fn surplus(&self, levels: &[f64], prices: &PriceVector) -> Result<f64, AgentError>;

    /// This agent's contribution to social welfare (utility or minus cost).
    fn welfare(&self, levels: &[f64]) -> Result<f64, AgentError>;

    /// Second derivatives of the welfare contribution, one per unit.
    fn welfare_curvatures(&self) -> Vec<f64>;

    /// Bus of each unit, in portfolio order.
    fn unit_buses(&self) -> Vec<BusId>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistCo {
    id: String,
    elastic: Vec<ElasticLoadUnit>,
    inelastic: Vec<InelasticLoadUnit>,
}

impl DistCo {
    pub fn new(
        id: impl Into<String>,
        elastic: Vec<ElasticLoadUnit>,
        inelastic: Vec<InelasticLoadUnit>,
    ) -> Result<Self, AgentError> {
        let id = id.into();
        for (i, u) in elastic.iter().enumerate() {
            if !u.bounds.is_valid() {
                return Err(AgentError::Bounds {
                    agent: id,
                    bus: u.bus,
                    min: u.bounds.min,
                    max: u.bounds.max,
                });
            }
            if !(u.utility.curvature > 0.0 && u.utility.curvature.is_finite()) {
                return Err(AgentError::Curvature {
                    agent: id,
                    bus: u.bus,
                    value: u.utility.curvature,
                });
            }
            if elastic[..i].iter().any(|v| v.bus == u.bus) {
                return Err(AgentError::DuplicateUnit {
                    agent: id,
                    bus: u.bus,
                    kind: "elastic",
                });
            }
        }
        for (i, u) in inelastic.iter().enumerate() {
            if !(u.demand >= 0.0 && u.demand.is_finite()) {
                return Err(AgentError::Negative {
                    agent: id,
                    bus: u.bus,
                    what: "inelastic demand",
                    value: u.demand,
                });
            }
            if inelastic[..i].iter().any(|v| v.bus == u.bus) {
                return Err(AgentError::DuplicateUnit {
                    agent: id,
                    bus: u.bus,
                    kind: "inelastic",
                });
            }
        }
        Ok(Self {
            id,
            elastic,
            inelastic,
        })
    }

    pub fn elastic_units(&self) -> &[ElasticLoadUnit] {
        &self.elastic
    }

    pub fn inelastic_units(&self) -> &[InelasticLoadUnit] {
        &self.inelastic
    }
}

impl PriceTaker for DistCo {
    fn id(&self) -> &str {
        &self.id
    }

    fn respond(&self, prices: &PriceVector) -> Result<Vec<f64>, AgentError> {
        self.elastic
            .iter()
            .map(|u| Ok(u.utility.response(price_at(&self.id, prices, u.bus)?, u.bounds)))
            .collect()
    }

    /// `Σ [u(e) − λ·e] − Σ λ·s`
    fn surplus(&self, levels: &[f64], prices: &PriceVector) -> Result<f64, AgentError> {
        check_len(&self.id, self.elastic.len(), levels.len())?;
        let mut total = 0.0;
        for (u, &e) in self.elastic.iter().zip(levels) {
            total += u.utility.value(e) - price_at(&self.id, prices, u.bus)? * e;
        }
        for u in &self.inelastic {
            total -= price_at(&self.id, prices, u.bus)? * u.demand;
        }
        Ok(total)
    }

    fn welfare(&self, levels: &[f64]) -> Result<f64, AgentError> {
        check_len(&self.id, self.elastic.len(), levels.len())?;
        Ok(self
            .elastic
            .iter()
            .zip(levels)
            .map(|(u, &e)| u.utility.value(e))
            .sum())
    }

    fn welfare_curvatures(&self) -> Vec<f64> {
        self.elastic.iter().map(|u| -u.utility.curvature).collect()
    }

    fn unit_buses(&self) -> Vec<BusId> {
        self.elastic.iter().map(|u| u.bus).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenCo {
    id: String,
    units: Vec<GenerationUnit>,
}

impl GenCo {
    pub fn new(id: impl Into<String>, units: Vec<GenerationUnit>) -> Result<Self, AgentError> {
        let id = id.into();
        for (i, u) in units.iter().enumerate() {
            if !u.bounds.is_valid() {
                return Err(AgentError::Bounds {
                    agent: id,
                    bus: u.bus,
                    min: u.bounds.min,
                    max: u.bounds.max,
                });
            }
            if !(u.cost.curvature > 0.0 && u.cost.curvature.is_finite()) {
                return Err(AgentError::Curvature {
                    agent: id,
                    bus: u.bus,
                    value: u.cost.curvature,
                });
            }
            if !(u.cost.linear >= 0.0 && u.cost.linear.is_finite()) {
                return Err(AgentError::Negative {
                    agent: id,
                    bus: u.bus,
                    what: "linear cost coefficient",
                    value: u.cost.linear,
                });
            }
            if units[..i].iter().any(|v| v.bus == u.bus) {
                return Err(AgentError::DuplicateUnit {
                    agent: id,
                    bus: u.bus,
                    kind: "generation",
                });
            }
        }
        Ok(Self { id, units })
    }

    pub fn units(&self) -> &[GenerationUnit] {
        &self.units
    }

    /// Marginal cost of each unit at the middle of its output range.
    pub fn midpoint_marginal_costs(&self) -> Vec<f64> {
        self.units
            .iter()
            .map(|u| u.cost.marginal(0.5 * (u.bounds.min + u.bounds.max)))
            .collect()
    }
}

impl PriceTaker for GenCo {
    fn id(&self) -> &str {
        &self.id
    }

    fn respond(&self, prices: &PriceVector) -> Result<Vec<f64>, AgentError> {
        self.units
            .iter()
            .map(|u| Ok(u.cost.response(price_at(&self.id, prices, u.bus)?, u.bounds)))
            .collect()
    }

    /// `Σ [λ·p − c(p)]`
    fn surplus(&self, levels: &[f64], prices: &PriceVector) -> Result<f64, AgentError> {
        check_len(&self.id, self.units.len(), levels.len())?;
        let mut total = 0.0;
        for (u, &p) in self.units.iter().zip(levels) {
            total += price_at(&self.id, prices, u.bus)? * p - u.cost.value(p);
        }
        Ok(total)
    }

    fn welfare(&self, levels: &[f64]) -> Result<f64, AgentError> {
        check_len(&self.id, self.units.len(), levels.len())?;
        Ok(-self
            .units
            .iter()
            .zip(levels)
            .map(|(u, &p)| u.cost.value(p))
            .sum::<f64>())
    }

    fn welfare_curvatures(&self) -> Vec<f64> {
        self.units.iter().map(|u| -u.cost.curvature).collect()
    }

    fn unit_buses(&self) -> Vec<BusId> {
        self.units.iter().map(|u| u.bus).collect()
    }
}

/// Unit levels chosen by every agent at one price vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentResponses {
    /// Elastic levels per DistCo, in unit order.
    pub distcos: Vec<Vec<f64>>,
    /// Generation levels per GenCo, in unit order.
    pub gencos: Vec<Vec<f64>>,
}

/// Bus-aggregated elastic demand `e`, inelastic demand `s` and generation `p`, in MW.
#[derive(Debug, Clone, PartialEq)]
pub struct BusProfiles {
    pub elastic: Vec<f64>,
    pub inelastic: Vec<f64>,
    pub generation: Vec<f64>,
}

impl BusProfiles {
    /// `p_n − e_n − s_n`
    pub fn net_generation(&self) -> Vec<f64> {
        (0..self.generation.len())
            .map(|n| self.generation[n] - self.elastic[n] - self.inelastic[n])
            .collect()
    }
}

pub fn respond_all(
    distcos: &[DistCo],
    gencos: &[GenCo],
    prices: &PriceVector,
) -> Result<AgentResponses, AgentError> {
    use rayon::prelude::*;
    let d = distcos
        .par_iter()
        .map(|d| d.respond(prices))
        .collect::<Result<Vec<_>, _>>()?;
    let g = gencos
        .par_iter()
        .map(|g| g.respond(prices))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AgentResponses {
        distcos: d,
        gencos: g,
    })
}

/// Sums unit levels bus-wise.
pub fn net_profiles(
    distcos: &[DistCo],
    gencos: &[GenCo],
    responses: &AgentResponses,
    bus_count: usize,
) -> BusProfiles {
    let mut out = BusProfiles {
        elastic: vec![0.0; bus_count],
        inelastic: vec![0.0; bus_count],
        generation: vec![0.0; bus_count],
    };
    for (d, levels) in distcos.iter().zip(&responses.distcos) {
        for (u, &e) in d.elastic.iter().zip(levels) {
            out.elastic[u.bus] += e;
        }
        for u in &d.inelastic {
            out.inelastic[u.bus] += u.demand;
        }
    }
    for (g, levels) in gencos.iter().zip(&responses.gencos) {
        for (u, &p) in g.units.iter().zip(levels) {
            out.generation[u.bus] += p;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prices(v: &[f64]) -> PriceVector {
        PriceVector::new(v.to_vec())
    }

    fn elastic(bus: BusId, a: f64, b: f64, lo: f64, hi: f64) -> ElasticLoadUnit {
        ElasticLoadUnit {
            bus,
            bounds: Bounds::new(lo, hi),
            utility: QuadraticUtility {
                linear: a,
                curvature: b,
            },
        }
    }

    fn gen(bus: BusId, c1: f64, c2: f64, lo: f64, hi: f64) -> GenerationUnit {
        GenerationUnit {
            bus,
            bounds: Bounds::new(lo, hi),
            cost: QuadraticCost {
                linear: c1,
                curvature: c2,
            },
        }
    }

    #[test]
    fn distco_surplus_examples() {
        // u(e) = 10e − e², so b = 2
        let d = DistCo::new("d", vec![elastic(0, 10.0, 2.0, 0.0, 10.0)], vec![]).unwrap();
        assert!((d.surplus(&[3.0], &prices(&[4.0])).unwrap() - 9.0).abs() < 1e-12);

        let only_inelastic = DistCo::new(
            "d",
            vec![],
            vec![InelasticLoadUnit {
                bus: 0,
                demand: 2.0,
            }],
        )
        .unwrap();
        assert!((only_inelastic.surplus(&[], &prices(&[5.0])).unwrap() + 10.0).abs() < 1e-12);
    }

    #[test]
    fn two_unit_sample_portfolio_sums_three_terms() {
        // elastic loads at buses 4 and 5, inelastic at bus 2 (0-based 3, 4, 1)
        let d = DistCo::new(
            "D1",
            vec![elastic(3, 8.0, 1.0, 0.0, 5.0), elastic(4, 6.0, 0.5, 0.0, 5.0)],
            vec![InelasticLoadUnit {
                bus: 1,
                demand: 1.5,
            }],
        )
        .unwrap();
        let lam = prices(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let e = [2.0, 3.0];
        let hand = (8.0 * 2.0 - 0.5 * 4.0 - 4.0 * 2.0) + (6.0 * 3.0 - 0.25 * 9.0 - 5.0 * 3.0)
            - 2.0 * 1.5;
        assert!((d.surplus(&e, &lam).unwrap() - hand).abs() < 1e-12);
    }

    #[test]
    fn genco_surplus_examples() {
        let g = GenCo::new("g", vec![gen(0, 1.0, 1.0, 0.0, 5.0)]).unwrap();
        assert!((g.surplus(&[2.0], &prices(&[3.0])).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(g.surplus(&[0.0], &prices(&[3.0])).unwrap(), 0.0);
        let two = GenCo::new(
            "g",
            vec![gen(0, 1.0, 1.0, 0.0, 5.0), gen(1, 0.5, 2.0, 0.0, 5.0)],
        )
        .unwrap();
        let lam = prices(&[3.0, 4.0]);
        let sep = (3.0 * 2.0 - (2.0 + 2.0)) + (4.0 * 1.0 - (0.5 + 1.0));
        assert!((two.surplus(&[2.0, 1.0], &lam).unwrap() - sep).abs() < 1e-12);
    }

    #[test]
    fn distco_response_examples() {
        let mk = |hi| DistCo::new("d", vec![elastic(0, 10.0, 2.0, 0.0, hi)], vec![]).unwrap();
        assert_eq!(mk(4.0).respond(&prices(&[4.0])).unwrap(), vec![3.0]);
        assert_eq!(mk(2.0).respond(&prices(&[4.0])).unwrap(), vec![2.0]);
        assert_eq!(mk(4.0).respond(&prices(&[12.0])).unwrap(), vec![0.0]);
        let pinned = DistCo::new("d", vec![elastic(0, 10.0, 2.0, 1.5, 1.5)], vec![]).unwrap();
        assert_eq!(pinned.respond(&prices(&[0.0])).unwrap(), vec![1.5]);
    }

    #[test]
    fn genco_response_examples() {
        let g = GenCo::new("g", vec![gen(0, 1.0, 1.0, 0.0, 5.0)]).unwrap();
        assert_eq!(g.respond(&prices(&[3.0])).unwrap(), vec![2.0]);
        assert_eq!(g.respond(&prices(&[0.5])).unwrap(), vec![0.0]);
        assert_eq!(g.respond(&prices(&[10.0])).unwrap(), vec![5.0]);
    }

    #[test]
    fn bisection_agrees_with_closed_form() {
        let u = QuadraticUtility {
            linear: 7.0,
            curvature: 0.3,
        };
        for &price in &[-1.0, 0.5, 2.0, 6.9, 9.0] {
            let b = Bounds::new(0.0, 20.0);
            let closed = u.response(price, b);
            let bis = argmax_concave(|e| u.marginal(e) - price, b.min, b.max, 1e-10);
            assert!((closed - bis).abs() < 1e-9, "price {price}: {closed} vs {bis}");
        }
    }

    #[test]
    fn unknown_bus_is_an_error() {
        let g = GenCo::new("g", vec![gen(3, 1.0, 1.0, 0.0, 5.0)]).unwrap();
        assert!(matches!(
            g.respond(&prices(&[1.0])),
            Err(AgentError::UnknownBus { bus: 3, .. })
        ));
    }

    #[test]
    fn invalid_portfolios_rejected() {
        assert!(matches!(
            DistCo::new("d", vec![elastic(0, 1.0, 0.0, 0.0, 1.0)], vec![]),
            Err(AgentError::Curvature { .. })
        ));
        assert!(matches!(
            GenCo::new("g", vec![gen(0, 1.0, 1.0, 2.0, 1.0)]),
            Err(AgentError::Bounds { .. })
        ));
        assert!(matches!(
            GenCo::new("g", vec![gen(0, 1.0, 1.0, 0.0, 1.0), gen(0, 1.0, 1.0, 0.0, 1.0)]),
            Err(AgentError::DuplicateUnit { .. })
        ));
    }

    #[test]
    fn net_profiles_aggregate_by_bus() {
        let d1 = DistCo::new(
            "d1",
            vec![elastic(1, 10.0, 1.0, 0.0, 10.0)],
            vec![InelasticLoadUnit {
                bus: 1,
                demand: 2.0,
            }],
        )
        .unwrap();
        let d2 = DistCo::new("d2", vec![elastic(1, 10.0, 1.0, 0.0, 10.0)], vec![]).unwrap();
        let g = GenCo::new("g", vec![gen(0, 1.0, 1.0, 0.0, 50.0)]).unwrap();
        let lam = prices(&[4.0, 6.0]);
        let r = respond_all(&[d1.clone(), d2.clone()], &[g.clone()], &lam).unwrap();
        let prof = net_profiles(&[d1, d2], &[g], &r, 2);
        assert_eq!(prof.elastic, vec![0.0, 8.0]);
        assert_eq!(prof.inelastic, vec![0.0, 2.0]);
        assert_eq!(prof.generation, vec![3.0, 0.0]);
        assert_eq!(prof.net_generation(), vec![3.0, -10.0]);
    }
}
