//! The four pipelines: design, trajectory, verify and scan.

use lpgate::consts::ordinary;
use lpgate::crystal::CrystalModel;
use lpgate::fidelity::sim::{SimConfig, SimModel};
use lpgate::fidelity::{
    analytic_infidelity, ehrenfest_deviation, higher_order_ld_infidelity, linear_fit, numeric_gate_fidelity,
    thermal_sweep, ThermalSpec,
};
use lpgate::par::{self, Exec};
use lpgate::sequence::{
    calibrate_with_rate, evaluate_design, sequence_closed_form, CalibrationOptions, CalibrationSpec, GateDesign,
    ProfileMode,
};
use lpgate::trajectory::{analytic_ld_alpha, closure_check, solve_trajectory, DriveParams, TrajectoryOptions};

use crate::config::{AxisName, Free, GeometryKind, RunConfig};
use crate::error::CliError;
use crate::report::{Cell, Check, DesignSummary, ModelSummary, Report, SweepFit, Table, TrajectorySummary};
use crate::units::{Dimension, Quantity};

/// Closure tolerance relative to max |alpha|.
pub const CLOSURE_TOLERANCE: f64 = 1e-6;
/// Allowed deviation from the analytic trajectory, relative to max |alpha|.
pub const LD_TOLERANCE: f64 = 1e-3;
/// Relative calibration tolerance on phi_c.
pub const PHASE_TOLERANCE: f64 = 1e-8;
pub const HALVING_TOLERANCE: f64 = 1e-8;
pub const RETURN_TOLERANCE: f64 = 1e-3;
pub const SPIN_FIDELITY_TOLERANCE: f64 = 1e-2;
pub const EHRENFEST_TOLERANCE: f64 = 1e-2;
pub const FIT_R_SQUARED: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Design,
    Trajectory,
    Verify,
    Scan,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Design => "design",
            Command::Trajectory => "trajectory",
            Command::Verify => "verify",
            Command::Scan => "scan",
        }
    }
}

/// Report plus the tables to write next to it.
pub struct Outcome {
    pub report: Report,
    pub tables: Vec<Table>,
}

fn calibration_options(exec: Exec) -> CalibrationOptions {
    let mut o = CalibrationOptions::default();
    o.trajectory.exec = exec;
    o.design.trajectory.exec = exec;
    o
}

/// Calibrate the free parameter, or evaluate the drive as given when nothing is free.
pub fn gate_design(cfg: &RunConfig, model: &CrystalModel, exec: Exec) -> Result<GateDesign, CliError> {
    let drive = cfg.drive(model)?;
    let omega_i = model.rate()?.omega_i;
    let seq = cfg.sequence_spec();
    let mode = cfg.profile_mode();
    let opts = calibration_options(exec);
    match drive.constraint() {
        Some(constraint) => {
            let spec = CalibrationSpec {
                eta: drive.eta,
                phi0: drive.phi0,
                omega: Some(drive.omega),
                constraint,
                mode,
                target_phase: drive.target_phase,
                cap: drive.cap,
            };
            Ok(calibrate_with_rate(omega_i, &spec, &seq, &opts)?)
        }
        None => {
            let (rabi, tau) = (drive.rabi.unwrap_or(0.0), drive.tau.unwrap_or(0.0));
            let params = DriveParams::with_tau(drive.eta, rabi, drive.phi0, drive.omega, tau)?;
            let (profile, _, sp) = evaluate_design(&params, omega_i, &seq, mode, &opts, None)?;
            Ok(GateDesign {
                drive: params,
                profile,
                mode,
                gate_time: seq.base_intervals() as f64 * tau,
                sequence: seq,
                omega_i,
                total_phase: sp.total,
                per_interval: sp.per_interval,
                target_phase: drive.target_phase,
                max_closure_residual: sp.max_closure_residual,
                calibration_iterations: 0,
            })
        }
    }
}

fn design_summary(design: &GateDesign, model: &CrystalModel, thermal: &ThermalSpec) -> DesignSummary {
    let d = &design.drive;
    let target = design.target_phase;
    DesignSummary {
        rabi_hz: ordinary(d.rabi),
        tau: d.tau,
        gate_time: design.gate_time,
        phi_c: design.total_phase.phi_c,
        phi_s: design.total_phase.phi_s,
        phase_error: (design.total_phase.phi_c - target).abs() / target,
        closed_form_phase: sequence_closed_form(d, design.omega_i, &design.sequence),
        df_analytic: analytic_infidelity(
            d,
            design.omega_i,
            model.coordination,
            thermal.nbar,
            design.sequence.blocks(),
        ),
        df_higher_order: higher_order_ld_infidelity(d.eta, thermal.nbar),
        nbar: thermal.nbar,
        design: design.clone(),
    }
}

fn design_tables(design: &GateDesign) -> Vec<Table> {
    let mut intervals = Table::new("intervals", &["index", "phase_offset", "phi_c", "phi_s"]);
    for (k, (o, p)) in design
        .sequence
        .interval_offsets()
        .iter()
        .zip(&design.per_interval)
        .enumerate()
    {
        intervals.push(vec![k.into(), (*o).into(), p.phi_c.into(), p.phi_s.into()]);
    }
    let mut profile = Table::new("profile", &["index", "duration", "slope", "offset"]);
    for (k, s) in design.profile.segments.iter().enumerate() {
        profile.push(vec![k.into(), s.duration.into(), s.slope.into(), s.offset.into()]);
    }
    vec![intervals, profile]
}

fn design_checks(cfg: &RunConfig, model: &CrystalModel, s: &DesignSummary) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    if cfg.drive(model)?.free() != Free::Nothing {
        checks.push(Check::at_most("phase_error", s.phase_error, PHASE_TOLERANCE));
    }
    if s.design.mode != ProfileMode::LambDicke {
        checks.push(Check::at_most(
            "closure_residual",
            s.design.max_closure_residual,
            CLOSURE_TOLERANCE,
        ));
    }
    Ok(checks)
}

pub fn design(cfg: &RunConfig, exec: Exec) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let design = gate_design(cfg, &model, exec)?;
    let summary = design_summary(&design, &model, &cfg.thermal_spec());
    let mut report = Report::new(Command::Design.name(), cfg);
    report.checks = design_checks(cfg, &model, &summary)?;
    report.model = Some(ModelSummary::from(&model));
    report.design = Some(summary);
    Ok(Outcome {
        report,
        tables: design_tables(&design),
    })
}

pub fn trajectory(cfg: &RunConfig, exec: Exec) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let design = gate_design(cfg, &model, exec)?;
    let topts = TrajectoryOptions {
        exec,
        ..TrajectoryOptions::default()
    };
    let sol = solve_trajectory(&design.profile, &design.drive, &topts)?;
    let closure = closure_check(&sol, CLOSURE_TOLERANCE);
    let analytic = design.mode == ProfileMode::LambDicke;
    let mut cols = vec!["t", "re_plus", "im_plus", "re_minus", "im_minus"];
    if analytic {
        cols.extend(["ld_re_plus", "ld_im_plus", "ld_re_minus", "ld_im_minus"]);
    }
    let mut table = Table::new("trajectory", &cols);
    let mut deviation: f64 = 0.0;
    for (k, r) in sol.records().iter().enumerate() {
        let mut row: Vec<Cell> = r.iter().map(|&v| v.into()).collect();
        if analytic {
            let p = analytic_ld_alpha(r[0], &design.drive, 1);
            let m = analytic_ld_alpha(r[0], &design.drive, -1);
            deviation = deviation
                .max((sol.alpha_plus[k] - p).norm())
                .max((sol.alpha_minus[k] - m).norm());
            row.extend([p.re.into(), p.im.into(), m.re.into(), m.im.into()]);
        }
        table.push(row);
    }
    let max_alpha = sol.max_abs();
    let ld_deviation = analytic.then(|| {
        if max_alpha > 0.0 {
            deviation / max_alpha
        } else {
            deviation
        }
    });
    let mut report = Report::new(Command::Trajectory.name(), cfg);
    match ld_deviation {
        Some(d) => report.checks.push(Check::at_most("ld_deviation", d, LD_TOLERANCE)),
        None => report.checks.push(Check::at_most(
            "closure_residual",
            closure.residual_plus.max(closure.residual_minus),
            CLOSURE_TOLERANCE,
        )),
    }
    report.model = Some(ModelSummary::from(&model));
    report.design = Some(design_summary(&design, &model, &cfg.thermal_spec()));
    report.trajectory = Some(TrajectorySummary {
        closure,
        midpoint_imag: sol.midpoint_imag,
        samples: sol.times.len(),
        ld_deviation,
    });
    Ok(Outcome {
        report,
        tables: vec![table],
    })
}

pub fn verify(cfg: &RunConfig, exec: Exec) -> Result<Outcome, CliError> {
    let sim = cfg
        .sim_config(exec)?
        .ok_or_else(|| CliError::Config("verify needs a [sim] section".into()))?;
    let model = cfg.model()?;
    let design = gate_design(cfg, &model, exec)?;
    let sim_model = SimModel::from_crystal(&model, sim.n_ions, sim.include_coupling)?;
    let thermal = cfg.thermal_spec();
    let mut report = Report::new(Command::Verify.name(), cfg);
    let mut tables = design_tables(&design);
    if sim.n_ions == 1 {
        let topts = TrajectoryOptions {
            exec,
            ..TrajectoryOptions::default()
        };
        let e = ehrenfest_deviation(&sim_model, &design, &sim, 1, &topts)?;
        report.checks.push(Check::at_most(
            "ehrenfest_relative_error",
            e.relative_error,
            EHRENFEST_TOLERANCE,
        ));
    } else {
        let fid = numeric_gate_fidelity(&sim_model, &design, &sim, &thermal)?;
        let checks = &mut report.checks;
        checks.push(Check::at_most("norm_drift", fid.max_norm_drift, sim.norm_tolerance));
        checks.push(Check::at_most("leakage", fid.max_leakage, sim.leakage_tolerance));
        if let Some(h) = fid.dt_halving_change {
            checks.push(Check::at_most("dt_halving_change", h, HALVING_TOLERANCE));
        }
        let min_return = fid
            .branch_phases
            .iter()
            .map(|b| b.return_overlap)
            .fold(f64::INFINITY, f64::min);
        checks.push(Check::at_least(
            "min_return_overlap",
            min_return,
            1.0 - RETURN_TOLERANCE,
        ));
        checks.push(Check::at_least(
            "spin_fidelity",
            fid.fidelity,
            1.0 - SPIN_FIDELITY_TOLERANCE,
        ));
        let mut branches = Table::new("branches", &["s1", "s2", "return_overlap", "phase"]);
        for b in &fid.branch_phases {
            branches.push(vec![
                b.spins[0].into(),
                b.spins[1].into(),
                b.return_overlap.into(),
                b.phase.into(),
            ]);
        }
        tables.push(branches);
        if let Some(levels) = cfg.sim.as_ref().and_then(|s| s.nbar_sweep.clone()) {
            let quiet = SimConfig {
                check_convergence: false,
                track_return: false,
                ..sim.clone()
            };
            let runs = thermal_sweep(&sim_model, &design, &quiet, &levels, thermal.weight_cutoff)?;
            let mut sweep = Table::new("sweep", &["nbar", "df_numeric", "df_analytic", "configurations"]);
            for r in &runs {
                sweep.push(vec![
                    r.nbar.into(),
                    r.df_numeric.into(),
                    r.df_analytic.into(),
                    r.configurations.into(),
                ]);
            }
            let values: Vec<f64> = runs.iter().map(|r| r.df_numeric).collect();
            let x: Vec<f64> = levels.iter().map(|n| 2.0 * n + 1.0).collect();
            let fit = linear_fit(&x, &values)?;
            report
                .checks
                .push(Check::at_least("thermal_fit_r_squared", fit.r_squared, FIT_R_SQUARED));
            report.sweep = Some(SweepFit {
                nbar: levels,
                df_numeric: values,
                slope: fit.slope,
                intercept: fit.intercept,
                r_squared: fit.r_squared,
            });
            tables.push(sweep);
        }
        report.fidelity = Some(fid);
    }
    report.model = Some(ModelSummary::from(&model));
    report.design = Some(design_summary(&design, &model, &thermal));
    Ok(Outcome { report, tables })
}

fn plain(q: &Quantity, field: &str) -> Result<f64, CliError> {
    match q {
        Quantity::Number(x) => Ok(*x),
        Quantity::Text(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{field}: expected a plain number, got {s:?}"))),
    }
}

/// Config of one scan point and the axis values in SI units.
fn scan_point(base: &RunConfig, picks: &[(AxisName, &Quantity)]) -> Result<(RunConfig, Vec<f64>), CliError> {
    let mut cfg = base.clone();
    let mut values = Vec::with_capacity(picks.len());
    for &(axis, q) in picks {
        let v = match axis {
            AxisName::Spacing => {
                cfg.crystal.spacing = Some(q.clone());
                q.value(Dimension::Length, "scan.spacing")?
            }
            AxisName::LocalFreq => {
                match cfg.crystal.geometry {
                    GeometryKind::Lattice => cfg.crystal.local_freq = Some(q.clone()),
                    GeometryKind::Chain => cfg.crystal.transverse_freq = Some(q.clone()),
                }
                if cfg.drive.omega.is_some() {
                    cfg.drive.omega = Some(q.clone());
                }
                q.value(Dimension::Frequency, "scan.local_freq")?
            }
            AxisName::K => {
                let k = plain(q, "scan.k")?;
                if !(k >= 1.0 && k.fract() == 0.0 && k <= u32::MAX as f64) {
                    return Err(CliError::Config(format!("scan.k: {k} is not a positive integer")));
                }
                cfg.drive.k = Some(k as u32);
                cfg.drive.tau = None;
                k
            }
            AxisName::Nbar => {
                let n = plain(q, "scan.nbar")?;
                cfg.thermal.nbar = n;
                n
            }
            AxisName::Eta => {
                let e = plain(q, "scan.eta")?;
                cfg.drive.eta = e;
                e
            }
        };
        values.push(v);
    }
    cfg.scan = None;
    cfg.validate()?;
    Ok((cfg, values))
}

fn check_axes(cfg: &RunConfig) -> Result<(), CliError> {
    let scan = cfg
        .scan
        .as_ref()
        .ok_or_else(|| CliError::Config("scan needs a [scan] section".into()))?;
    for a in &scan.axis {
        match a.name {
            AxisName::Spacing if cfg.crystal.geometry != GeometryKind::Lattice => {
                return Err(CliError::Config("a spacing scan needs a lattice geometry".into()))
            }
            AxisName::Spacing if cfg.crystal.interaction_rate.is_some() => {
                return Err(CliError::Config(
                    "a spacing scan has no effect while crystal.interaction_rate is set".into(),
                ))
            }
            AxisName::K if cfg.drive.tau.as_ref().is_some_and(Quantity::is_free) => {
                return Err(CliError::Config(
                    "a K scan needs a fixed tau, not tau = \"free\"".into(),
                ))
            }
            _ => {}
        }
    }
    if scan.axis.len() == 2 && scan.axis[0].name == scan.axis[1].name {
        return Err(CliError::Config("scan axes must differ".into()));
    }
    Ok(())
}

struct PointResult {
    omega_i: f64,
    rabi: f64,
    tau: f64,
    gate_time: f64,
    phi_c: f64,
    df_analytic: f64,
    df_higher_order: f64,
    df_numeric: Option<f64>,
}

fn run_point(cfg: &RunConfig, numeric: bool) -> Result<PointResult, CliError> {
    let model = cfg.model()?;
    let design = gate_design(cfg, &model, Exec::Sequential)?;
    let thermal = cfg.thermal_spec();
    let s = design_summary(&design, &model, &thermal);
    let df_numeric = if numeric {
        let sim = cfg
            .sim_config(Exec::Sequential)?
            .expect("validated: numeric scans carry [sim]");
        let sm = SimModel::from_crystal(&model, sim.n_ions.max(2), sim.include_coupling)?;
        Some(numeric_gate_fidelity(&sm, &design, &sim, &thermal)?.df_numeric)
    } else {
        None
    };
    Ok(PointResult {
        omega_i: design.omega_i,
        rabi: design.drive.rabi,
        tau: design.drive.tau,
        gate_time: design.gate_time,
        phi_c: design.total_phase.phi_c,
        df_analytic: s.df_analytic,
        df_higher_order: s.df_higher_order,
        df_numeric,
    })
}

pub fn scan(cfg: &RunConfig, exec: Exec) -> Result<Outcome, CliError> {
    check_axes(cfg)?;
    let scan = cfg.scan.as_ref().expect("checked above");
    let axes = &scan.axis;
    let mut grid: Vec<Vec<(AxisName, &Quantity)>> = axes[0].values.iter().map(|q| vec![(axes[0].name, q)]).collect();
    if let Some(second) = axes.get(1) {
        grid = grid
            .into_iter()
            .flat_map(|p| {
                second.values.iter().map(move |q| {
                    let mut row = p.clone();
                    row.push((second.name, q));
                    row
                })
            })
            .collect();
    }
    let points = grid
        .iter()
        .map(|picks| scan_point(cfg, picks))
        .collect::<Result<Vec<_>, _>>()?;
    let results = par::map(exec, &points, |(c, _)| run_point(c, scan.numeric));
    let mut cols: Vec<&str> = axes
        .iter()
        .map(|a| match a.name {
            AxisName::Spacing => "spacing",
            AxisName::LocalFreq => "local_freq_hz",
            AxisName::K => "k",
            AxisName::Nbar => "nbar",
            AxisName::Eta => "eta",
        })
        .collect();
    cols.extend([
        "interaction_rate_hz",
        "rabi_hz",
        "tau",
        "gate_time",
        "phi_c",
        "df_analytic",
        "df_higher_order",
        "df_numeric",
        "error",
    ]);
    let mut table = Table::new("scan", &cols);
    let mut failures = 0usize;
    for ((_, values), r) in points.iter().zip(&results) {
        let mut row: Vec<Cell> = values.iter().map(|&v| v.into()).collect();
        match r {
            Ok(p) => row.extend([
                ordinary(p.omega_i).into(),
                ordinary(p.rabi).into(),
                p.tau.into(),
                p.gate_time.into(),
                p.phi_c.into(),
                p.df_analytic.into(),
                p.df_higher_order.into(),
                p.df_numeric.map_or(Cell::Text(String::new()), Cell::Num),
                "".into(),
            ]),
            Err(e) => {
                failures += 1;
                row.extend((0..8).map(|_| Cell::Text(String::new())));
                row.push(e.to_string().into());
            }
        }
        table.push(row);
    }
    let mut report = Report::new(Command::Scan.name(), cfg);
    report.scan_rows = Some(points.len());
    report
        .checks
        .push(Check::at_most("failed_points", failures as f64, 0.0));
    Ok(Outcome {
        report,
        tables: vec![table],
    })
}

pub fn run(command: Command, cfg: &RunConfig, exec: Exec) -> Result<Outcome, CliError> {
    match command {
        Command::Design => design(cfg, exec),
        Command::Trajectory => trajectory(cfg, exec),
        Command::Verify => verify(cfg, exec),
        Command::Scan => scan(cfg, exec),
    }
}
