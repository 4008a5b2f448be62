//! Report records and table output.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use lpgate::consts::ordinary;
use lpgate::crystal::CrystalModel;
use lpgate::fidelity::FidelityReport;
use lpgate::sequence::GateDesign;
use lpgate::trajectory::ClosureReport;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

impl Default for Tool {
    fn default() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub positions: Vec<f64>,
    /// Local frequencies / 2 pi (Hz).
    pub local_freqs_hz: Vec<f64>,
    /// omega^2_{mu mu'} (rad^2/s^2).
    pub coupling: Vec<Vec<f64>>,
    pub target_pair: Option<[usize; 2]>,
    /// omega_I / 2 pi (Hz).
    pub interaction_rate_hz: Option<f64>,
    pub t_p: Option<f64>,
    pub v_p: Option<f64>,
    pub coordination: f64,
}

impl From<&CrystalModel> for ModelSummary {
    fn from(m: &CrystalModel) -> Self {
        Self {
            positions: m.positions.clone(),
            local_freqs_hz: m.local_freqs.iter().map(|&w| ordinary(w)).collect(),
            coupling: m.coupling.clone(),
            target_pair: m.target_pair,
            interaction_rate_hz: m.interaction.map(|r| ordinary(r.omega_i)),
            t_p: m.interaction.map(|r| r.t_p),
            v_p: m.interaction.map(|r| r.v_p),
            coordination: m.coordination,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    /// |Omega| / 2 pi (Hz).
    pub rabi_hz: f64,
    pub tau: f64,
    pub gate_time: f64,
    pub phi_c: f64,
    pub phi_s: f64,
    /// |phi_c - target| / target.
    pub phase_error: f64,
    /// Closed-form Lamb-Dicke phase of the same drive and sequence.
    pub closed_form_phase: f64,
    /// Thermal-bath estimate at thermal.nbar.
    pub df_analytic: f64,
    pub df_higher_order: f64,
    pub nbar: f64,
    pub design: GateDesign,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub closure: ClosureReport,
    pub midpoint_imag: [f64; 2],
    pub samples: usize,
    /// Max |numeric - analytic| / max|alpha| when the two-segment profile is used.
    pub ld_deviation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFit {
    pub nbar: Vec<f64>,
    pub df_numeric: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value >= threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: Tool,
    pub command: String,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectorySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<FidelityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan_rows: Option<usize>,
    pub checks: Vec<Check>,
    pub timing: Timing,
}

impl Report {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            tool: Tool::default(),
            command: command.into(),
            config: config.clone(),
            model: None,
            design: None,
            trajectory: None,
            fidelity: None,
            sweep: None,
            scan_rows: None,
            checks: Vec::new(),
            timing: Timing {
                wall_seconds: 0.0,
                workers: 1,
            },
        }
    }

    /// Everything except the timing block; identical for identical configs.
    pub fn payload(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("timing");
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => x.to_string(),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i8> for Cell {
    fn from(x: i8) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.into())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path, format: Format) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Output(format!("{}: {e}", dir.display()));
        match format {
            Format::Csv => {
                let path = dir.join(format!("{}.csv", self.name));
                let mut w =
                    csv::Writer::from_path(&path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
                let csv_err = |e: csv::Error| CliError::Output(format!("{}: {e}", path.display()));
                w.write_record(&self.columns).map_err(csv_err)?;
                for r in &self.rows {
                    w.write_record(r.iter().map(Cell::render)).map_err(csv_err)?;
                }
                w.flush().map_err(io)
            }
            Format::Json => {
                let path = dir.join(format!("{}.json", self.name));
                let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Output(e.to_string()))?;
                fs::write(path, text + "\n").map_err(io)
            }
        }
    }
}

/// Write report.json, the config echo and every table into `dir`.
pub fn write_all(dir: &Path, report: &Report, tables: &[Table], format: Format) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Output(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let text = serde_json::to_string_pretty(report).map_err(|e| CliError::Output(e.to_string()))?;
    fs::write(dir.join("report.json"), text + "\n").map_err(io)?;
    fs::write(dir.join("config.toml"), report.config.to_toml()?).map_err(io)?;
    for t in tables {
        t.write(dir, format)?;
    }
    Ok(())
}
