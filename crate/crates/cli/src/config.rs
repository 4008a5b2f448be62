//! Run configuration: a TOML file with unit-suffixed quantities.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;
use std::path::Path;

use lpgate::consts::{angular, TWO_PI};
use lpgate::crystal::{build_model, CrystalConfig, CrystalModel, Geometry, IonSpecies};
use lpgate::fidelity::sim::SimConfig;
use lpgate::fidelity::ThermalSpec;
use lpgate::par::Exec;
use lpgate::sequence::{compose_sequence, Constraint, ProfileMode, SequenceSpec};

use crate::error::CliError;
use crate::units::{Dimension, Quantity};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub crystal: CrystalSection,
    pub drive: DriveSection,
    #[serde(default)]
    pub profile: ProfileSection,
    #[serde(default)]
    pub sequence: SequenceSection,
    #[serde(default)]
    pub thermal: ThermalSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Chain,
    Lattice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalSection {
    #[serde(default = "default_mass")]
    pub mass: Quantity,
    #[serde(default = "default_charge")]
    pub charge: u32,
    pub geometry: GeometryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_ions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axial_freq: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transverse_freq: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_freq: Option<Quantity>,
    /// n_c; defaults to 2.0 for chains and 5.6 for lattices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordination: Option<f64>,
    /// Replaces the computed omega_I (the coupling is rescaled to match).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction_rate: Option<Quantity>,
}

fn default_mass() -> Quantity {
    Quantity::text("171 amu")
}

fn default_charge() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub eta: f64,
    /// |Omega| / 2 pi, or "free".
    pub rabi: Quantity,
    /// Base interval, or "free"; exclusive with `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Quantity>,
    /// K with omega tau = 2 K pi; exclusive with `tau`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    /// Optical phase in rad.
    #[serde(default)]
    pub phi0: f64,
    /// Drive frequency; the target pair's local frequency when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Quantity>,
    /// Upper bound on the free parameter (a frequency for |Omega|, a time for tau).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<Quantity>,
    /// Target phi_c in rad; pi/4 for the controlled-phase gate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_phase: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    LambDicke,
    Designed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    pub kind: ProfileKind,
    #[serde(default = "default_segments")]
    pub segments_per_half: usize,
}

fn default_segments() -> usize {
    2
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            kind: ProfileKind::LambDicke,
            segments_per_half: default_segments(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Phi2,
    Phi4,
    Phi8,
    TwoPhi8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSection {
    pub protocol: Protocol,
}

impl Default for SequenceSection {
    fn default() -> Self {
        Self {
            protocol: Protocol::TwoPhi8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSection {
    #[serde(default)]
    pub nbar: f64,
    #[serde(default = "default_weight_cutoff")]
    pub weight_cutoff: f64,
}

fn default_weight_cutoff() -> f64 {
    ThermalSpec::default().weight_cutoff
}

impl Default for ThermalSection {
    fn default() -> Self {
        Self {
            nbar: 0.0,
            weight_cutoff: default_weight_cutoff(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_sim_ions")]
    pub n_ions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fock_cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_period: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<Quantity>,
    #[serde(default = "default_true")]
    pub include_coupling: bool,
    #[serde(default = "default_true")]
    pub check_convergence: bool,
    /// Extra thermal occupations for a linear fit of dF_numeric in (2 nbar + 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nbar_sweep: Option<Vec<f64>>,
}

fn default_sim_ions() -> usize {
    2
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    Spacing,
    LocalFreq,
    K,
    Nbar,
    Eta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: AxisName,
    pub values: Vec<Quantity>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub axis: Vec<Axis>,
    /// Also run the exact simulation at every point (needs [sim]).
    #[serde(default)]
    pub numeric: bool,
}

/// Which drive parameter calibration solves for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Free {
    Rabi,
    Tau,
    Nothing,
}

/// Drive settings in SI units with angular frequencies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolvedDrive {
    pub eta: f64,
    pub phi0: f64,
    pub omega: f64,
    pub rabi: Option<f64>,
    pub tau: Option<f64>,
    pub cap: Option<f64>,
    pub target_phase: f64,
}

impl ResolvedDrive {
    pub fn free(&self) -> Free {
        match (self.rabi, self.tau) {
            (None, _) => Free::Rabi,
            (_, None) => Free::Tau,
            _ => Free::Nothing,
        }
    }

    pub fn constraint(&self) -> Option<Constraint> {
        match (self.rabi, self.tau) {
            (None, Some(tau)) => Some(Constraint::FixedTau { tau }),
            (Some(rabi), None) => Some(Constraint::FixedRabi { rabi }),
            _ => None,
        }
    }
}

fn need<'a>(q: &'a Option<Quantity>, field: &str) -> Result<&'a Quantity, CliError> {
    q.as_ref()
        .ok_or_else(|| CliError::Config(format!("{field} is required for this geometry")))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Output(e.to_string()))
    }

    /// Schema checks that need no physics.
    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.drive;
        let tau_free = d.tau.as_ref().is_some_and(Quantity::is_free);
        if d.rabi.is_free() && tau_free {
            return Err(CliError::Config(
                "drive.rabi and drive.tau are both free; exactly one parameter can be calibrated".into(),
            ));
        }
        match (&d.tau, d.k) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either drive.tau or drive.k, not both".into())),
            (None, None) => return Err(CliError::Config("drive.tau or drive.k is required".into())),
            _ => {}
        }
        if d.k == Some(0) {
            return Err(CliError::Config("drive.k must be at least 1".into()));
        }
        if let Some(scan) = &self.scan {
            if scan.axis.is_empty() || scan.axis.len() > 2 {
                return Err(CliError::Config("scan needs one or two axes".into()));
            }
            if scan.axis.iter().any(|a| a.values.is_empty()) {
                return Err(CliError::Config("scan axes need at least one value".into()));
            }
            if scan.numeric && self.sim.is_none() {
                return Err(CliError::Config("scan.numeric needs a [sim] section".into()));
            }
        }
        self.crystal_config()?;
        Ok(())
    }

    pub fn crystal_config(&self) -> Result<CrystalConfig, CliError> {
        let c = &self.crystal;
        let species = IonSpecies {
            mass_amu: c.mass.value(Dimension::Mass, "crystal.mass")?,
            charge: c.charge,
        };
        let geometry = match c.geometry {
            GeometryKind::Chain => Geometry::Chain1D {
                n_ions: c
                    .n_ions
                    .ok_or_else(|| CliError::Config("crystal.n_ions is required for a chain".into()))?,
                axial_freq: angular(
                    need(&c.axial_freq, "crystal.axial_freq")?.value(Dimension::Frequency, "crystal.axial_freq")?,
                ),
                transverse_freq: angular(
                    need(&c.transverse_freq, "crystal.transverse_freq")?
                        .value(Dimension::Frequency, "crystal.transverse_freq")?,
                ),
            },
            GeometryKind::Lattice => Geometry::UniformLattice {
                spacing: need(&c.spacing, "crystal.spacing")?.value(Dimension::Length, "crystal.spacing")?,
                coordination: c.coordination.unwrap_or(5.6),
                local_freq: angular(
                    need(&c.local_freq, "crystal.local_freq")?.value(Dimension::Frequency, "crystal.local_freq")?,
                ),
            },
        };
        let cfg = CrystalConfig {
            species,
            geometry,
            coordination: c.coordination,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model(&self) -> Result<CrystalModel, CliError> {
        let model = build_model(&self.crystal_config()?)?;
        match &self.crystal.interaction_rate {
            Some(q) => {
                let nu = q.value(Dimension::Frequency, "crystal.interaction_rate")?;
                Ok(model.with_interaction_rate(angular(nu))?)
            }
            None => Ok(model),
        }
    }

    pub fn drive(&self, model: &CrystalModel) -> Result<ResolvedDrive, CliError> {
        let d = &self.drive;
        let omega = match &d.omega {
            Some(q) => angular(q.value(Dimension::Frequency, "drive.omega")?),
            None => model.pair_frequency()?,
        };
        let rabi = d.rabi.value_or_free(Dimension::Frequency, "drive.rabi")?.map(angular);
        let tau = match (&d.tau, d.k) {
            (Some(q), _) => q.value_or_free(Dimension::Time, "drive.tau")?,
            (None, Some(k)) => Some(TWO_PI * k as f64 / omega),
            (None, None) => return Err(CliError::Config("drive.tau or drive.k is required".into())),
        };
        let cap = match &d.cap {
            None => None,
            Some(q) if rabi.is_none() => Some(angular(q.value(Dimension::Frequency, "drive.cap")?)),
            Some(q) => Some(q.value(Dimension::Time, "drive.cap")?),
        };
        Ok(ResolvedDrive {
            eta: d.eta,
            phi0: d.phi0,
            omega,
            rabi,
            tau,
            cap,
            target_phase: d.target_phase.unwrap_or(FRAC_PI_4),
        })
    }

    pub fn profile_mode(&self) -> ProfileMode {
        match self.profile.kind {
            ProfileKind::LambDicke => ProfileMode::LambDicke,
            ProfileKind::Designed => ProfileMode::Designed {
                segments_per_half: self.profile.segments_per_half,
            },
        }
    }

    pub fn sequence_spec(&self) -> SequenceSpec {
        let n = match self.sequence.protocol {
            Protocol::Phi2 => 1,
            Protocol::Phi4 => 2,
            Protocol::Phi8 => 3,
            Protocol::TwoPhi8 => return SequenceSpec::two_phi8(),
        };
        compose_sequence(n).expect("protocol exponents 1 to 3 are supported")
    }

    pub fn thermal_spec(&self) -> ThermalSpec {
        ThermalSpec {
            nbar: self.thermal.nbar,
            weight_cutoff: self.thermal.weight_cutoff,
        }
    }

    pub fn sim_config(&self, exec: Exec) -> Result<Option<SimConfig>, CliError> {
        let Some(s) = &self.sim else { return Ok(None) };
        let base = SimConfig::default();
        let sim = SimConfig {
            n_ions: s.n_ions,
            fock_cutoff: s.fock_cutoff.unwrap_or(base.fock_cutoff),
            steps_per_period: s.steps_per_period.unwrap_or(base.steps_per_period),
            dt: s.dt.as_ref().map(|q| q.value(Dimension::Time, "sim.dt")).transpose()?,
            include_coupling: s.include_coupling,
            check_convergence: s.check_convergence,
            exec,
            ..base
        };
        sim.validate()?;
        Ok(Some(sim))
    }
}
