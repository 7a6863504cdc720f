use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::market::IterationRecord;

/// Renders `v` with 12 significant digits, trailing zeros removed.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.11e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim(format!("{:.*}", decimals, v))
    } else {
        format!("{}e{}", trim(mantissa.to_string()), exp)
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Writes `prices.csv`, `mismatch.csv`, `summary.csv` and `admm_residuals.csv`.
pub fn write_trajectory(records: &[IterationRecord], out_dir: &Path) -> io::Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut prices = String::from("t,bus,lambda\n");
    let mut mismatch = String::from("t,bus,h\n");
    let mut summary = String::from("t,h_inf,J,phi,admm_rounds\n");
    let mut admm = String::from("t,k,r_norm,s_norm\n");
    for r in records {
        for (bus, v) in r.prices.iter().enumerate() {
            writeln!(prices, "{},{},{}", r.t, bus, format_number(*v)).unwrap();
        }
        for (bus, v) in r.mismatch.iter().enumerate() {
            writeln!(mismatch, "{},{},{}", r.t, bus, format_number(*v)).unwrap();
        }
        writeln!(
            summary,
            "{},{},{},{},{}",
            r.t,
            format_number(r.h_inf),
            format_number(r.welfare),
            format_number(r.dual_value),
            r.admm_rounds
        )
        .unwrap();
        for (k, res) in r.admm_trace.iter().enumerate() {
            writeln!(
                admm,
                "{},{},{},{}",
                r.t,
                k + 1,
                format_number(res.primal),
                format_number(res.dual)
            )
            .unwrap();
        }
    }
    fs::write(out_dir.join("prices.csv"), prices)?;
    fs::write(out_dir.join("mismatch.csv"), mismatch)?;
    fs::write(out_dir.join("summary.csv"), summary)?;
    fs::write(out_dir.join("admm_residuals.csv"), admm)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSummary {
    pub passed: bool,
    pub balance: bool,
    pub optimality: bool,
    pub max_mismatch: f64,
    pub max_response_change: f64,
    pub max_angle_change: f64,
    pub violations: Vec<String>,
}

/// Final state of a run, written as `run.json` next to the CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub case: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub iterations: usize,
    pub total_admm_rounds: usize,
    pub beta: f64,
    pub rho: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub mismatch_tol: f64,
    pub warm_start: bool,
    pub bus_labels: Vec<String>,
    pub prices: Vec<f64>,
    pub theta: Vec<f64>,
    pub elastic: Vec<f64>,
    pub generation: Vec<f64>,
    pub mismatch: Vec<f64>,
    pub h_inf: f64,
    pub welfare: f64,
    pub dual_value: f64,
    pub duality_gap: f64,
    pub equilibrium: EquilibriumSummary,
}

pub fn write_run_summary(summary: &RunSummary, out_dir: &Path) -> io::Result<()> {
    fs::create_dir_all(out_dir)?;
    let text = serde_json::to_string_pretty(summary).map_err(io::Error::other)?;
    fs::write(out_dir.join("run.json"), text + "\n")
}

pub fn read_run_summary(run_dir: &Path) -> io::Result<RunSummary> {
    let text = fs::read_to_string(run_dir.join("run.json"))?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub case: String,
    pub oracle_welfare: f64,
    pub run_welfare: f64,
    pub relative_welfare_gap: f64,
    pub max_angle_difference: f64,
    pub max_price_difference: f64,
    pub oracle_theta: Vec<f64>,
    pub oracle_shadow_prices: Vec<f64>,
    pub grid_points: usize,
    pub final_step: f64,
}
