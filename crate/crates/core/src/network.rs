//! Physical grid: buses, lines and the convex DC flow model.
//!
//! Flows use the second-order small-angle expansion of the AC line equations
//! with unit voltage magnitudes:
//!
//! `g(θ_nm) = B·(θ_n − θ_m) + ½·G·(θ_n − θ_m)²`
//!
//! which keeps the direction asymmetry of real flows, so that
//! `g(θ_nm) + g(θ_mn) = G·(θ_n − θ_m)²` is the (approximate) line loss.
//! All quantities here are per-unit on the case base; conversion to MW happens
//! at the market boundary.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

pub type BusId = usize;

/// Angle-difference bound applied when a case does not provide one.
pub const DEFAULT_ANGLE_BOUND: f64 = std::f64::consts::FRAC_PI_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bus {
    pub id: BusId,
    pub is_slack: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("line {from}-{to}: endpoints must be distinct")]
    SelfLoop { from: BusId, to: BusId },
    #[error("line {from}-{to}: {field} must be strictly positive and finite (got {value})")]
    NonPositive {
        from: BusId,
        to: BusId,
        field: &'static str,
        value: f64,
    },
    #[error("line {from}-{to}: angle bounds [{min}, {max}] must satisfy min <= 0 <= max")]
    AngleBounds {
        from: BusId,
        to: BusId,
        min: f64,
        max: f64,
    },
    #[error("line {from}-{to} references a bus outside 0..{bus_count}")]
    UnknownBus {
        from: BusId,
        to: BusId,
        bus_count: usize,
    },
    #[error("duplicate line between buses {0} and {1}")]
    DuplicateLine(BusId, BusId),
    #[error("slack bus {0} does not exist")]
    UnknownSlack(BusId),
    #[error("network needs at least one slack bus")]
    NoSlack,
    #[error("network needs at least one bus")]
    Empty,
}

/// An undirected line stored with canonical `(min, max)` endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    from: BusId,
    to: BusId,
    conductance: f64,
    susceptance: f64,
    limit: f64,
    angle_min: f64,
    angle_max: f64,
}

impl Line {
    pub fn new(
        a: BusId,
        b: BusId,
        conductance: f64,
        susceptance: f64,
        limit: f64,
    ) -> Result<Self, NetworkError> {
        Self::with_angle_bounds(
            a,
            b,
            conductance,
            susceptance,
            limit,
            -DEFAULT_ANGLE_BOUND,
            DEFAULT_ANGLE_BOUND,
        )
    }

    /// `angle_min`/`angle_max` bound `θ_from − θ_to` in the canonical orientation.
    pub fn with_angle_bounds(
        a: BusId,
        b: BusId,
        conductance: f64,
        susceptance: f64,
        limit: f64,
        angle_min: f64,
        angle_max: f64,
    ) -> Result<Self, NetworkError> {
        if a == b {
            return Err(NetworkError::SelfLoop { from: a, to: b });
        }
        for (field, value) in [
            ("conductance G", conductance),
            ("susceptance B", susceptance),
            ("limit K", limit),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(NetworkError::NonPositive {
                    from: a,
                    to: b,
                    field,
                    value,
                });
            }
        }
        // flipping the stored orientation flips the sign of the difference bounds
        let (from, to, angle_min, angle_max) = if a < b {
            (a, b, angle_min, angle_max)
        } else {
            (b, a, -angle_max, -angle_min)
        };
        if !(angle_min <= 0.0 && angle_max >= 0.0) || !angle_min.is_finite() || !angle_max.is_finite()
        {
            return Err(NetworkError::AngleBounds {
                from,
                to,
                min: angle_min,
                max: angle_max,
            });
        }
        Ok(Self {
            from,
            to,
            conductance,
            susceptance,
            limit,
            angle_min,
            angle_max,
        })
    }

    pub fn endpoints(&self) -> (BusId, BusId) {
        (self.from, self.to)
    }

    pub fn conductance(&self) -> f64 {
        self.conductance
    }

    pub fn susceptance(&self) -> f64 {
        self.susceptance
    }

    pub fn limit(&self) -> f64 {
        self.limit
    }

    /// Bounds on `θ_from − θ_to` for the canonical orientation.
    pub fn angle_bounds(&self) -> (f64, f64) {
        (self.angle_min, self.angle_max)
    }

    /// Bounds on `θ_n − θ_m` for the given orientation.
    pub fn angle_bounds_from(&self, n: BusId) -> (f64, f64) {
        if n == self.from {
            (self.angle_min, self.angle_max)
        } else {
            (-self.angle_max, -self.angle_min)
        }
    }

    pub fn touches(&self, n: BusId) -> bool {
        self.from == n || self.to == n
    }

    /// The endpoint opposite `n`. Callers must pass an endpoint.
    pub fn other(&self, n: BusId) -> BusId {
        debug_assert!(self.touches(n));
        if n == self.from {
            self.to
        } else {
            self.from
        }
    }

    /// Power leaving the bus at angle `theta_n` towards the bus at `theta_m`.
    pub fn flow(&self, theta_n: f64, theta_m: f64) -> f64 {
        self.dc_component(theta_n, theta_m) + self.loss_component(theta_n, theta_m)
    }

    pub fn dc_component(&self, theta_n: f64, theta_m: f64) -> f64 {
        self.susceptance * (theta_n - theta_m)
    }

    pub fn loss_component(&self, theta_n: f64, theta_m: f64) -> f64 {
        let d = theta_n - theta_m;
        0.5 * self.conductance * d * d
    }

    /// `G·Δθ²`, the sum of the two directed flows.
    pub fn line_loss(&self, theta_n: f64, theta_m: f64) -> f64 {
        let d = theta_n - theta_m;
        self.conductance * d * d
    }

    /// Derivative of `flow` with respect to the angle difference.
    pub fn flow_slope(&self, theta_n: f64, theta_m: f64) -> f64 {
        self.susceptance + self.conductance * (theta_n - theta_m)
    }
}

/// Voltage angles for every bus of a network, in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    theta: Vec<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatingPointError {
    #[error("expected {expected} angles, got {got}")]
    Length { expected: usize, got: usize },
    #[error("angle at bus {bus} is {value}, outside [-pi, pi]")]
    OutOfRange { bus: BusId, value: f64 },
    #[error("slack bus {bus} has angle {value}, expected 0")]
    SlackNotPinned { bus: BusId, value: f64 },
}

impl OperatingPoint {
    pub fn flat(bus_count: usize) -> Self {
        Self {
            theta: vec![0.0; bus_count],
        }
    }

    /// Checks the `[−π, π]` box and the slack pins.
    pub fn new(network: &Network, theta: Vec<f64>) -> Result<Self, OperatingPointError> {
        if theta.len() != network.bus_count() {
            return Err(OperatingPointError::Length {
                expected: network.bus_count(),
                got: theta.len(),
            });
        }
        for (bus, &value) in theta.iter().enumerate() {
            if !(value.abs() <= PI) {
                return Err(OperatingPointError::OutOfRange { bus, value });
            }
            if network.is_slack(bus) && value != 0.0 {
                return Err(OperatingPointError::SlackNotPinned { bus, value });
            }
        }
        Ok(Self { theta })
    }

    /// Wraps raw angles without validation. Used for finite-difference probes.
    pub fn unchecked(theta: Vec<f64>) -> Self {
        Self { theta }
    }

    pub fn angle(&self, n: BusId) -> f64 {
        self.theta[n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// Something wrong with the ownership partition or the graph itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopologyIssue {
    /// A line listed by more than one TransCo.
    OverlappingEdge { line: usize, owners: Vec<usize> },
    /// A line no TransCo owns.
    UncoveredEdge { line: usize },
    /// A TransCo referencing a line index that does not exist.
    UnknownEdge { transco: usize, line: usize },
    EmptyRegion { transco: usize },
    MissingSlack { transco: usize },
    MultipleSlacks { transco: usize, slacks: Vec<BusId> },
    Disconnected { components: usize },
}

impl TopologyIssue {
    pub fn code(&self) -> &'static str {
        match self {
            Self::OverlappingEdge { .. } => "partition.overlap",
            Self::UncoveredEdge { .. } => "partition.uncovered",
            Self::UnknownEdge { .. } => "partition.unknown_edge",
            Self::EmptyRegion { .. } => "transco.empty",
            Self::MissingSlack { .. } => "transco.missing_slack",
            Self::MultipleSlacks { .. } => "transco.multiple_slacks",
            Self::Disconnected { .. } => "network.disconnected",
        }
    }
}

impl fmt::Display for TopologyIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OverlappingEdge { line, owners } => {
                write!(f, "line {line} is owned by several TransCos {owners:?}")
            }
            Self::UncoveredEdge { line } => write!(f, "line {line} is not owned by any TransCo"),
            Self::UnknownEdge { transco, line } => {
                write!(f, "TransCo {transco} lists unknown line {line}")
            }
            Self::EmptyRegion { transco } => write!(f, "TransCo {transco} owns no lines"),
            Self::MissingSlack { transco } => {
                write!(f, "TransCo {transco} has no slack bus in its region")
            }
            Self::MultipleSlacks { transco, slacks } => {
                write!(f, "TransCo {transco} has several slack buses {slacks:?}")
            }
            Self::Disconnected { components } => {
                write!(f, "network is split into {components} components")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    slack_set: BTreeSet<BusId>,
    incidence: Vec<Vec<usize>>,
}

impl Network {
    pub fn new(
        bus_count: usize,
        lines: Vec<Line>,
        slack: impl IntoIterator<Item = BusId>,
    ) -> Result<Self, NetworkError> {
        if bus_count == 0 {
            return Err(NetworkError::Empty);
        }
        let slack_set: BTreeSet<BusId> = slack.into_iter().collect();
        if slack_set.is_empty() {
            return Err(NetworkError::NoSlack);
        }
        if let Some(&bad) = slack_set.iter().find(|&&s| s >= bus_count) {
            return Err(NetworkError::UnknownSlack(bad));
        }
        let mut seen = BTreeSet::new();
        let mut incidence = vec![Vec::new(); bus_count];
        for (idx, line) in lines.iter().enumerate() {
            let (a, b) = line.endpoints();
            if b >= bus_count {
                return Err(NetworkError::UnknownBus {
                    from: a,
                    to: b,
                    bus_count,
                });
            }
            if !seen.insert((a, b)) {
                return Err(NetworkError::DuplicateLine(a, b));
            }
            incidence[a].push(idx);
            incidence[b].push(idx);
        }
        let buses = (0..bus_count)
            .map(|id| Bus {
                id,
                is_slack: slack_set.contains(&id),
            })
            .collect();
        Ok(Self {
            buses,
            lines,
            slack_set,
            incidence,
        })
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn line(&self, idx: usize) -> &Line {
        &self.lines[idx]
    }

    pub fn slack_set(&self) -> &BTreeSet<BusId> {
        &self.slack_set
    }

    pub fn is_slack(&self, n: BusId) -> bool {
        self.slack_set.contains(&n)
    }

    /// Non-slack buses in ascending order.
    pub fn free_buses(&self) -> Vec<BusId> {
        (0..self.bus_count()).filter(|n| !self.is_slack(*n)).collect()
    }

    pub fn incident_lines(&self, n: BusId) -> &[usize] {
        &self.incidence[n]
    }

    pub fn find_line(&self, a: BusId, b: BusId) -> Option<usize> {
        let key = (a.min(b), a.max(b));
        self.incidence
            .get(key.0)?
            .iter()
            .copied()
            .find(|&idx| self.lines[idx].endpoints() == key)
    }

    /// `f_n(θ)`: sum of flows leaving bus `n` over its incident lines.
    pub fn bus_injection(&self, point: &OperatingPoint, n: BusId) -> f64 {
        let theta = point.as_slice();
        self.incidence[n]
            .iter()
            .map(|&idx| {
                let line = &self.lines[idx];
                line.flow(theta[n], theta[line.other(n)])
            })
            .sum()
    }

    pub fn injections(&self, point: &OperatingPoint) -> Vec<f64> {
        (0..self.bus_count())
            .map(|n| self.bus_injection(point, n))
            .collect()
    }

    pub fn total_losses(&self, point: &OperatingPoint) -> f64 {
        let theta = point.as_slice();
        self.lines
            .iter()
            .map(|l| {
                let (a, b) = l.endpoints();
                l.line_loss(theta[a], theta[b])
            })
            .sum()
    }

    pub fn component_count(&self) -> usize {
        let n = self.bus_count();
        let mut label = vec![usize::MAX; n];
        let mut components = 0;
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = components;
            while let Some(u) = stack.pop() {
                for &idx in &self.incidence[u] {
                    let v = self.lines[idx].other(u);
                    if label[v] == usize::MAX {
                        label[v] = components;
                        stack.push(v);
                    }
                }
            }
            components += 1;
        }
        components
    }

    /// Checks that `partition` (line indices per TransCo) covers every line
    /// exactly once, that every region holds exactly one slack bus, and that
    /// the graph is connected. Every issue found is reported.
    pub fn validate_topology(&self, partition: &[Vec<usize>]) -> Result<(), Vec<TopologyIssue>> {
        let mut issues = Vec::new();
        let mut owners: Vec<Vec<usize>> = vec![Vec::new(); self.lines.len()];
        for (t, lines) in partition.iter().enumerate() {
            if lines.is_empty() {
                issues.push(TopologyIssue::EmptyRegion { transco: t });
                continue;
            }
            let mut region = BTreeSet::new();
            for &idx in lines {
                match self.lines.get(idx) {
                    Some(line) => {
                        if !owners[idx].contains(&t) {
                            owners[idx].push(t);
                        }
                        let (a, b) = line.endpoints();
                        region.insert(a);
                        region.insert(b);
                    }
                    None => issues.push(TopologyIssue::UnknownEdge {
                        transco: t,
                        line: idx,
                    }),
                }
            }
            let slacks: Vec<BusId> = region
                .iter()
                .copied()
                .filter(|b| self.is_slack(*b))
                .collect();
            match slacks.len() {
                0 => issues.push(TopologyIssue::MissingSlack { transco: t }),
                1 => {}
                _ => issues.push(TopologyIssue::MultipleSlacks { transco: t, slacks }),
            }
        }
        for (line, o) in owners.into_iter().enumerate() {
            match o.len() {
                0 => issues.push(TopologyIssue::UncoveredEdge { line }),
                1 => {}
                _ => issues.push(TopologyIssue::OverlappingEdge { line, owners: o }),
            }
        }
        let components = self.component_count();
        if components > 1 {
            issues.push(TopologyIssue::Disconnected { components });
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }
}
