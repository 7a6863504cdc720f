//! A complete market instance: grid, ownership and run defaults.

use std::fmt;

use crate::agents::{DistCo, GenCo, PriceTaker};
use crate::network::Network;
use crate::transco::TransCo;

#[derive(Debug, Clone, PartialEq)]
pub struct CaseDefaults {
    pub rho: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    /// Step-size scale; derived from the first mismatch when absent.
    pub beta: Option<f64>,
    /// Uniform starting price; derived from generator costs when absent.
    pub lambda0: Option<f64>,
    /// Per-unit threshold on `‖h‖∞`.
    pub mismatch_tol: f64,
    pub max_outer_iters: usize,
}

impl Default for CaseDefaults {
    fn default() -> Self {
        Self {
            rho: 0.21,
            eps_primal: 5e-5,
            eps_dual: 5e-6,
            beta: None,
            lambda0: None,
            mismatch_tol: 1e-3,
            max_outer_iters: 5000,
        }
    }
}

/// One violated invariant, with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseIssue {
    pub code: String,
    pub message: String,
}

impl CaseIssue {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for CaseIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.code, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub base_mva: f64,
    pub bus_labels: Vec<String>,
    pub network: Network,
    pub transcos: Vec<TransCo>,
    pub distcos: Vec<DistCo>,
    pub gencos: Vec<GenCo>,
    pub defaults: CaseDefaults,
    pub comments: Vec<String>,
}

impl Case {
    /// Cross-checks that need the whole case: agent buses exist, the
    /// TransCo lines partition the network and every region has one slack.
    pub fn check(&self) -> Vec<CaseIssue> {
        let mut issues = Vec::new();
        let n = self.network.bus_count();
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            issues.push(CaseIssue::new(
                "case.base_mva",
                format!("base_mva must be positive (got {})", self.base_mva),
            ));
        }
        if self.bus_labels.len() != n {
            issues.push(CaseIssue::new(
                "case.bus_labels",
                format!("{} labels for {} buses", self.bus_labels.len(), n),
            ));
        }
        let agents: Vec<(&str, Vec<usize>)> = self
            .distcos
            .iter()
            .map(|d| {
                let mut buses = d.unit_buses();
                buses.extend(d.inelastic_units().iter().map(|u| u.bus));
                (d.id(), buses)
            })
            .chain(self.gencos.iter().map(|g| (g.id(), g.unit_buses())))
            .collect();
        for (id, buses) in agents {
            for b in buses {
                if b >= n {
                    issues.push(CaseIssue::new(
                        "agent.unknown_bus",
                        format!("{id}: unit at bus {b}, network has {n} buses"),
                    ));
                }
            }
        }
        if self.network.lines().is_empty() {
            if !self.transcos.is_empty() {
                issues.push(CaseIssue::new(
                    "transco.empty",
                    "TransCos listed for a network without lines",
                ));
            }
        } else {
            let partition: Vec<Vec<usize>> = self
                .transcos
                .iter()
                .map(|t| t.region().line_ids().to_vec())
                .collect();
            if let Err(found) = self.network.validate_topology(&partition) {
                for issue in found {
                    issues.push(CaseIssue::new(issue.code(), issue.to_string()));
                }
            }
        }
        if self.network.bus_count() > 1 && self.network.lines().is_empty() {
            issues.push(CaseIssue::new(
                "network.disconnected",
                "network has several buses and no lines",
            ));
        }
        issues
    }

    pub fn label(&self, bus: usize) -> &str {
        &self.bus_labels[bus]
    }
}
