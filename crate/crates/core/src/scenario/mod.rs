//! JSON case files, bundled cases and run output.

mod output;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use output::{
    EquilibriumSummary, format_number, read_run_summary, write_run_summary, write_trajectory, RunSummary,
    OracleComparison,
};

use crate::agents::{
    Bounds, DistCo, ElasticLoadUnit, GenCo, GenerationUnit, InelasticLoadUnit, QuadraticCost,
    QuadraticUtility,
};
use crate::case::{Case, CaseDefaults, CaseIssue};
use crate::network::{Line, Network, DEFAULT_ANGLE_BOUND};
use crate::transco::TransCo;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comments: Vec<String>,
    #[serde(default = "default_base")]
    pub base_mva: f64,
    pub buses: Vec<BusEntry>,
    pub slack_set: Vec<usize>,
    #[serde(default)]
    pub lines: Vec<LineEntry>,
    #[serde(default)]
    pub transcos: Vec<TransCoEntry>,
    #[serde(default)]
    pub gencos: Vec<GenCoEntry>,
    #[serde(default)]
    pub distcos: Vec<DistCoEntry>,
    #[serde(default)]
    pub defaults: DefaultsEntry,
}

fn default_base() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusEntry {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineEntry {
    pub from: usize,
    pub to: usize,
    pub g: f64,
    pub b: f64,
    pub k: f64,
    /// Bounds on `θ_from − θ_to`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransCoEntry {
    pub id: String,
    /// Lines as `[from, to]` bus pairs.
    pub lines: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenCoEntry {
    pub id: String,
    pub units: Vec<GenUnitEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenUnitEntry {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistCoEntry {
    pub id: String,
    #[serde(default)]
    pub elastic: Vec<ElasticEntry>,
    #[serde(default)]
    pub inelastic: Vec<InelasticEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticEntry {
    pub bus: usize,
    pub e_min: f64,
    pub e_max: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InelasticEntry {
    pub bus: usize,
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefaultsEntry {
    pub rho: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    pub mismatch_tol: f64,
    pub max_outer_iters: usize,
}

impl Default for DefaultsEntry {
    fn default() -> Self {
        Self::from(&CaseDefaults::default())
    }
}

impl From<&CaseDefaults> for DefaultsEntry {
    fn from(d: &CaseDefaults) -> Self {
        Self {
            rho: d.rho,
            eps_primal: d.eps_primal,
            eps_dual: d.eps_dual,
            beta: d.beta,
            lambda0: d.lambda0,
            mismatch_tol: d.mismatch_tol,
            max_outer_iters: d.max_outer_iters,
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{} invalid field(s):\n{}", .0.len(), render(.0))]
    Invalid(Vec<CaseIssue>),
}

fn render(issues: &[CaseIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl LoadError {
    /// Machine-readable codes of every semantic violation.
    pub fn codes(&self) -> Vec<&str> {
        match self {
            LoadError::Invalid(issues) => issues.iter().map(|i| i.code.as_str()).collect(),
            LoadError::Io { .. } => vec!["io"],
            LoadError::Parse { .. } => vec!["parse"],
        }
    }
}

pub fn load_case(path: impl AsRef<Path>) -> Result<Case, LoadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_case(&text)
}

pub fn parse_case(text: &str) -> Result<Case, LoadError> {
    let file: CaseFile = serde_json::from_str(text).map_err(|e| LoadError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    file.into_case()
}

fn finite_positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl CaseFile {
    /// Builds and validates a case, collecting every violation found.
    pub fn into_case(self) -> Result<Case, LoadError> {
        let mut issues = Vec::new();
        let mut push = |code: &str, msg: String| issues.push(CaseIssue::new(code, msg));

        if self.schema_version != SCHEMA_VERSION {
            push(
                "case.schema_version",
                format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version),
            );
        }
        if !finite_positive(self.base_mva) {
            push("case.base_mva", format!("base_mva must be positive (got {})", self.base_mva));
        }
        let n = self.buses.len();
        for (i, b) in self.buses.iter().enumerate() {
            if b.id != i {
                push("bus.ids", format!("bus at position {i} has id {} (ids must be 0..{n} in order)", b.id));
            }
        }
        let d = &self.defaults;
        for (name, v) in [
            ("rho", d.rho),
            ("eps_primal", d.eps_primal),
            ("eps_dual", d.eps_dual),
            ("mismatch_tol", d.mismatch_tol),
        ] {
            if !finite_positive(v) {
                push("defaults.nonpositive", format!("defaults.{name} must be positive (got {v})"));
            }
        }
        if let Some(b) = d.beta.filter(|b| !finite_positive(*b)) {
            push("defaults.nonpositive", format!("defaults.beta must be positive (got {b})"));
        }
        if let Some(l) = d.lambda0.filter(|l| !finite_positive(*l)) {
            push("defaults.nonpositive", format!("defaults.lambda0 must be positive (got {l})"));
        }

        let mut lines = Vec::new();
        for l in &self.lines {
            let built = Line::with_angle_bounds(
                l.from,
                l.to,
                l.g,
                l.b,
                l.k,
                l.angle_min.unwrap_or(-DEFAULT_ANGLE_BOUND),
                l.angle_max.unwrap_or(DEFAULT_ANGLE_BOUND),
            );
            match built {
                Ok(line) => lines.push(line),
                Err(e) => push("line.invalid", e.to_string()),
            }
        }
        let network = if lines.len() == self.lines.len() {
            match Network::new(n, lines, self.slack_set.iter().copied()) {
                Ok(net) => Some(net),
                Err(e) => {
                    push("network.invalid", e.to_string());
                    None
                }
            }
        } else {
            None
        };

        let mut partition = Vec::new();
        if let Some(net) = &network {
            for t in &self.transcos {
                let mut ids = Vec::new();
                for &[a, b] in &t.lines {
                    match net.find_line(a, b) {
                        Some(i) => ids.push(i),
                        None => push("partition.unknown_edge", format!("{}: no line between buses {a} and {b}", t.id)),
                    }
                }
                partition.push(ids);
            }
            if !net.lines().is_empty() || !self.transcos.is_empty() {
                if let Err(found) = net.validate_topology(&partition) {
                    for issue in found {
                        push(issue.code(), issue.to_string());
                    }
                }
            } else if n > 1 {
                push("network.disconnected", "network has several buses and no lines".into());
            }
        }

        let in_range = |bus: usize| bus < n;
        let mut gencos = Vec::new();
        for g in &self.gencos {
            for u in g.units.iter().filter(|u| !in_range(u.bus)) {
                push("agent.unknown_bus", format!("{}: unit at bus {}, network has {n} buses", g.id, u.bus));
            }
            let units = g
                .units
                .iter()
                .map(|u| GenerationUnit {
                    bus: u.bus,
                    bounds: Bounds::new(u.p_min, u.p_max),
                    cost: QuadraticCost {
                        linear: u.c1,
                        curvature: u.c2,
                    },
                })
                .collect();
            match GenCo::new(g.id.clone(), units) {
                Ok(g) => gencos.push(g),
                Err(e) => push("agent.invalid", e.to_string()),
            }
        }
        let mut distcos = Vec::new();
        for dc in &self.distcos {
            let buses = dc.elastic.iter().map(|u| u.bus).chain(dc.inelastic.iter().map(|u| u.bus));
            for bus in buses.filter(|b| !in_range(*b)) {
                push("agent.unknown_bus", format!("{}: unit at bus {bus}, network has {n} buses", dc.id));
            }
            let elastic = dc
                .elastic
                .iter()
                .map(|u| ElasticLoadUnit {
                    bus: u.bus,
                    bounds: Bounds::new(u.e_min, u.e_max),
                    utility: QuadraticUtility {
                        linear: u.a,
                        curvature: u.b,
                    },
                })
                .collect();
            let inelastic = dc
                .inelastic
                .iter()
                .map(|u| InelasticLoadUnit {
                    bus: u.bus,
                    demand: u.demand,
                })
                .collect();
            match DistCo::new(dc.id.clone(), elastic, inelastic) {
                Ok(d) => distcos.push(d),
                Err(e) => push("agent.invalid", e.to_string()),
            }
        }
        let mut ids = BTreeSet::new();
        for id in self
            .gencos
            .iter()
            .map(|g| &g.id)
            .chain(self.distcos.iter().map(|d| &d.id))
            .chain(self.transcos.iter().map(|t| &t.id))
        {
            if !ids.insert(id.as_str()) {
                push("agent.duplicate_id", format!("agent id {id} is used more than once"));
            }
        }

        if !issues.is_empty() {
            return Err(LoadError::Invalid(issues));
        }
        let network = network.expect("network built when no issues");
        let transcos = self
            .transcos
            .iter()
            .zip(partition)
            .map(|(t, ids)| TransCo::new(t.id.clone(), &network, ids))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| LoadError::Invalid(vec![CaseIssue::new("transco.invalid", e.to_string())]))?;
        let case = Case {
            name: self.name,
            base_mva: self.base_mva,
            bus_labels: self
                .buses
                .iter()
                .map(|b| b.label.clone().unwrap_or_else(|| b.id.to_string()))
                .collect(),
            network,
            transcos,
            distcos,
            gencos,
            defaults: CaseDefaults {
                rho: d.rho,
                eps_primal: d.eps_primal,
                eps_dual: d.eps_dual,
                beta: d.beta,
                lambda0: d.lambda0,
                mismatch_tol: d.mismatch_tol,
                max_outer_iters: d.max_outer_iters,
            },
            comments: self.comments,
        };
        let late = case.check();
        if !late.is_empty() {
            return Err(LoadError::Invalid(late));
        }
        Ok(case)
    }

    /// The file form of a case. Angle bounds are always written out.
    pub fn from_case(case: &Case) -> Self {
        let net = &case.network;
        Self {
            schema_version: SCHEMA_VERSION,
            name: case.name.clone(),
            comments: case.comments.clone(),
            base_mva: case.base_mva,
            buses: case
                .bus_labels
                .iter()
                .enumerate()
                .map(|(id, l)| BusEntry {
                    id,
                    label: Some(l.clone()),
                })
                .collect(),
            slack_set: net.slack_set().iter().copied().collect(),
            lines: net
                .lines()
                .iter()
                .map(|l| {
                    let (from, to) = l.endpoints();
                    let (lo, hi) = l.angle_bounds();
                    LineEntry {
                        from,
                        to,
                        g: l.conductance(),
                        b: l.susceptance(),
                        k: l.limit(),
                        angle_min: Some(lo),
                        angle_max: Some(hi),
                    }
                })
                .collect(),
            transcos: case
                .transcos
                .iter()
                .map(|t| TransCoEntry {
                    id: t.id().to_string(),
                    lines: t
                        .region()
                        .line_ids()
                        .iter()
                        .map(|&i| {
                            let (a, b) = net.line(i).endpoints();
                            [a, b]
                        })
                        .collect(),
                })
                .collect(),
            gencos: case
                .gencos
                .iter()
                .map(|g| GenCoEntry {
                    id: crate::agents::PriceTaker::id(g).to_string(),
                    units: g
                        .units()
                        .iter()
                        .map(|u| GenUnitEntry {
                            bus: u.bus,
                            p_min: u.bounds.min,
                            p_max: u.bounds.max,
                            c1: u.cost.linear,
                            c2: u.cost.curvature,
                        })
                        .collect(),
                })
                .collect(),
            distcos: case
                .distcos
                .iter()
                .map(|d| DistCoEntry {
                    id: crate::agents::PriceTaker::id(d).to_string(),
                    elastic: d
                        .elastic_units()
                        .iter()
                        .map(|u| ElasticEntry {
                            bus: u.bus,
                            e_min: u.bounds.min,
                            e_max: u.bounds.max,
                            a: u.utility.linear,
                            b: u.utility.curvature,
                        })
                        .collect(),
                    inelastic: d
                        .inelastic_units()
                        .iter()
                        .map(|u| InelasticEntry {
                            bus: u.bus,
                            demand: u.demand,
                        })
                        .collect(),
                })
                .collect(),
            defaults: DefaultsEntry::from(&case.defaults),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case file serializes")
    }
}

/// Case files shipped with the crate.
pub const BUNDLED: &[(&str, &str)] = &[
    ("ieee14_mod", include_str!("../../cases/ieee14_mod.json")),
    ("tiny_1bus", include_str!("../../cases/tiny_1bus.json")),
    ("tiny_2bus", include_str!("../../cases/tiny_2bus.json")),
    ("ring4", include_str!("../../cases/ring4.json")),
    ("sample5", include_str!("../../cases/sample5.json")),
];

pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Loads a bundled case by name. Panics on unknown names or invalid data,
/// both of which are programming errors.
pub fn bundled_case(name: &str) -> Case {
    let text = bundled_source(name).unwrap_or_else(|| panic!("no bundled case named {name}"));
    parse_case(text).unwrap_or_else(|e| panic!("bundled case {name} is invalid: {e}"))
}

/// Resolves `spec` as a file path, or as a bundled case name when no such file exists.
pub fn resolve_case(spec: &str) -> Result<Case, LoadError> {
    let path = Path::new(spec);
    if !path.exists() {
        if let Some(text) = bundled_source(spec) {
            return parse_case(text);
        }
    }
    load_case(path)
}
