//! Conditional phases, decoupling sequences and controlled-phase calibration.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::ops::Add;

use crate::consts::TWO_PI;
use crate::crystal::CrystalModel;
use crate::error::{invalid, Error, Result};
use crate::par;
use crate::quad::simpson_with_error;
use crate::roots::{bracket_positive, brent, BrentOptions};
use crate::trajectory::{
    closure_check, design_phase_profile_with, solve_trajectory, DesignOptions, DriveParams, PhaseProfile,
    TrajectoryOptions, TrajectorySolution,
};

/// Phase flips of the phi2, phi4 and phi8 protocols.
pub const PHI2: [f64; 2] = [0.0, PI];
pub const PHI4: [f64; 4] = [0.0, PI, PI, 0.0];
pub const PHI8: [f64; 8] = [0.0, PI, PI, 0.0, PI, 0.0, 0.0, PI];

fn table(n: u8) -> Option<&'static [f64]> {
    match n {
        1 => Some(&PHI2),
        2 => Some(&PHI4),
        3 => Some(&PHI8),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    /// Protocol exponent; the block has 2^n base intervals.
    pub n: u8,
    pub phase_flips: Vec<f64>,
    /// Extra phase of a second block (pi/2 for the two-phi8 combination).
    pub second_block_offset: Option<f64>,
}

pub fn compose_sequence(n: u8) -> Result<SequenceSpec> {
    let Some(t) = table(n) else {
        return invalid(format!("unsupported protocol exponent {n}; expected 1, 2 or 3"));
    };
    Ok(SequenceSpec {
        n,
        phase_flips: t.to_vec(),
        second_block_offset: None,
    })
}

impl SequenceSpec {
    /// Two phi8 blocks, the second shifted by pi/2.
    pub fn two_phi8() -> Self {
        Self {
            second_block_offset: Some(FRAC_PI_2),
            ..compose_sequence(3).expect("phi8 is supported")
        }
    }

    pub fn validate(&self) -> Result<()> {
        match table(self.n) {
            Some(t) if t == self.phase_flips.as_slice() => {}
            Some(_) => return invalid("phase flips do not match the protocol table"),
            None => return invalid(format!("unsupported protocol exponent {}", self.n)),
        }
        if let Some(o) = self.second_block_offset {
            if !o.is_finite() {
                return invalid("second block offset must be finite");
            }
        }
        Ok(())
    }

    pub fn blocks(&self) -> usize {
        if self.second_block_offset.is_some() {
            2
        } else {
            1
        }
    }

    pub fn base_intervals(&self) -> usize {
        self.phase_flips.len() * self.blocks()
    }

    /// Total additive phase of every base interval in time order.
    pub fn interval_offsets(&self) -> Vec<f64> {
        let mut out = self.phase_flips.clone();
        if let Some(o) = self.second_block_offset {
            out.extend(self.phase_flips.iter().map(|f| f + o));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPhase {
    /// Coefficient of sigma1 sigma2 (rad).
    pub phi_c: f64,
    /// Coefficient of sigma1 + sigma2 (rad).
    pub phi_s: f64,
}

impl Add for ConditionalPhase {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            phi_c: self.phi_c + o.phi_c,
            phi_s: self.phi_s + o.phi_s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseIntegral {
    pub phase: ConditionalPhase,
    /// Richardson estimate of the quadrature error of phi_c, relative.
    pub relative_error: f64,
}

/// phi_c and phi_s from two branches sampled on the same grid.
pub fn conditional_phase_from_branches(
    times: &[f64],
    breaks: &[usize],
    plus: &[num_complex::Complex64],
    minus: &[num_complex::Complex64],
    omega_i: f64,
) -> Result<PhaseIntegral> {
    if plus.len() != times.len() || minus.len() != times.len() {
        return invalid("spin branches are not sampled on a common grid");
    }
    if breaks.first() != Some(&0) || breaks.last() != Some(&(times.len() - 1)) {
        return invalid("grid breaks do not cover the sample range");
    }
    let fc: Vec<f64> = plus.iter().zip(minus).map(|(p, m)| (p.re - m.re).powi(2)).collect();
    let fs: Vec<f64> = plus.iter().zip(minus).map(|(p, m)| p.re * p.re - m.re * m.re).collect();
    let (c, ec) = simpson_with_error(times, breaks, &fc);
    let (s, _) = simpson_with_error(times, breaks, &fs);
    Ok(PhaseIntegral {
        phase: ConditionalPhase {
            phi_c: omega_i * c,
            phi_s: omega_i * s,
        },
        relative_error: if c > 0.0 { ec / c } else { 0.0 },
    })
}

pub fn conditional_phase(traj: &TrajectorySolution, omega_i: f64) -> Result<ConditionalPhase> {
    Ok(conditional_phase_with_error(traj, omega_i)?.phase)
}

pub fn conditional_phase_with_error(traj: &TrajectorySolution, omega_i: f64) -> Result<PhaseIntegral> {
    conditional_phase_from_branches(&traj.times, &traj.breaks, &traj.alpha_plus, &traj.alpha_minus, omega_i)
}

/// Lamb-Dicke closed form eta^2 w_I tau |Omega|^2 / (6 w^2) [w^2 tau^2 + 36 cos^2 phi0 - 6].
pub fn ld_phase_closed_form(params: &DriveParams, omega_i: f64) -> f64 {
    let (w, tau) = (params.omega, params.tau);
    let c = params.phi0.cos();
    params.eta.powi(2) * omega_i * tau * params.rabi.powi(2) / (6.0 * w * w) * (w * w * tau * tau + 36.0 * c * c - 6.0)
}

/// Two-phi8 closed form (8/3) w_I tau (eta |Omega| tau)^2 [1 + 12/(w tau)^2].
pub fn two_phi8_closed_form(params: &DriveParams, omega_i: f64) -> f64 {
    let wt = params.omega * params.tau;
    8.0 / 3.0 * omega_i * params.tau * params.drive_area().powi(2) * (1.0 + 12.0 / (wt * wt))
}

/// Closed-form total phase of a sequence (sum of per-interval closed forms).
pub fn sequence_closed_form(params: &DriveParams, omega_i: f64, seq: &SequenceSpec) -> f64 {
    seq.interval_offsets()
        .iter()
        .map(|o| ld_phase_closed_form(&params.with_phi0(params.phi0 + o), omega_i))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequencePhase {
    pub total: ConditionalPhase,
    pub per_interval: Vec<ConditionalPhase>,
    /// Largest |a(tau)| / max|a| over the integrated intervals.
    pub max_closure_residual: f64,
    pub max_quadrature_error: f64,
}

/// Total conditional phase of a sequence. Each base interval is re-integrated
/// with its total phase offset; identical offsets share one integration.
pub fn sequence_phase(
    profile: &PhaseProfile,
    params: &DriveParams,
    omega_i: f64,
    seq: &SequenceSpec,
    opts: &TrajectoryOptions,
) -> Result<SequencePhase> {
    seq.validate()?;
    let offsets = seq.interval_offsets();
    let mut distinct: Vec<f64> = Vec::new();
    for o in &offsets {
        if !distinct.contains(o) {
            distinct.push(*o);
        }
    }
    let inner = TrajectoryOptions {
        exec: crate::par::Exec::Sequential,
        ..*opts
    };
    let results = par::map(opts.exec, &distinct, |o| -> Result<(PhaseIntegral, f64)> {
        let p = params.with_phi0(params.phi0 + o);
        let sol = solve_trajectory(profile, &p, &inner)?;
        let c = closure_check(&sol, f64::INFINITY);
        Ok((
            conditional_phase_with_error(&sol, omega_i)?,
            c.residual_plus.max(c.residual_minus),
        ))
    });
    let results = par::collect_ordered(results)?;
    let mut per_interval = Vec::with_capacity(offsets.len());
    let mut total = ConditionalPhase::default();
    for o in &offsets {
        let k = distinct.iter().position(|d| d == o).expect("offset present");
        per_interval.push(results[k].0.phase);
        total = total + results[k].0.phase;
    }
    Ok(SequencePhase {
        total,
        per_interval,
        max_closure_residual: results.iter().map(|r| r.1).fold(0.0, f64::max),
        max_quadrature_error: results.iter().map(|r| r.0.relative_error).fold(0.0, f64::max),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileMode {
    /// Two-segment profile omega t, then omega t + pi.
    LambDicke,
    /// Symmetric profile with offsets solved for closure of both branches.
    Designed { segments_per_half: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "free", rename_all = "snake_case")]
pub enum Constraint {
    /// tau fixed, |Omega| calibrated.
    FixedTau { tau: f64 },
    /// |Omega| fixed, tau calibrated.
    FixedRabi { rabi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec {
    pub eta: f64,
    pub phi0: f64,
    /// Local frequency (rad/s); the model's pair frequency when absent.
    pub omega: Option<f64>,
    pub constraint: Constraint,
    pub mode: ProfileMode,
    pub target_phase: f64,
    /// Upper bound on the free parameter.
    pub cap: Option<f64>,
}

impl CalibrationSpec {
    pub fn new(eta: f64, omega: f64, constraint: Constraint) -> Self {
        Self {
            eta,
            phi0: 0.0,
            omega: Some(omega),
            constraint,
            mode: ProfileMode::LambDicke,
            target_phase: FRAC_PI_4,
            cap: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub trajectory: TrajectoryOptions,
    pub design: DesignOptions,
    /// Required |phi_c - target| / target.
    pub tolerance: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            trajectory: TrajectoryOptions::default(),
            design: DesignOptions::default(),
            tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateDesign {
    pub drive: DriveParams,
    pub profile: PhaseProfile,
    pub mode: ProfileMode,
    pub sequence: SequenceSpec,
    pub omega_i: f64,
    pub total_phase: ConditionalPhase,
    pub per_interval: Vec<ConditionalPhase>,
    pub target_phase: f64,
    pub gate_time: f64,
    pub max_closure_residual: f64,
    pub calibration_iterations: usize,
}

/// Profile and total phase for a fully specified drive.
pub fn evaluate_design(
    params: &DriveParams,
    omega_i: f64,
    seq: &SequenceSpec,
    mode: ProfileMode,
    opts: &CalibrationOptions,
    warm: Option<&[f64]>,
) -> Result<(PhaseProfile, Vec<f64>, SequencePhase)> {
    let (profile, offsets) = match mode {
        ProfileMode::LambDicke => (PhaseProfile::lamb_dicke(params.tau), Vec::new()),
        ProfileMode::Designed { segments_per_half } => {
            let dopts = DesignOptions {
                segments_per_half,
                trajectory: opts.trajectory,
                ..opts.design.clone()
            };
            let d = design_phase_profile_with(params, &dopts, warm)?;
            (d.profile, d.offsets)
        }
    };
    let sp = sequence_phase(&profile, params, omega_i, seq, &opts.trajectory)?;
    Ok((profile, offsets, sp))
}

/// Calibrate a controlled-phase gate on the target pair of `model`.
pub fn calibrate_cpf(
    model: &CrystalModel,
    spec: &CalibrationSpec,
    seq: &SequenceSpec,
    opts: &CalibrationOptions,
) -> Result<GateDesign> {
    let rate = model.rate()?;
    let omega = match spec.omega {
        Some(w) => w,
        None => model.pair_frequency()?,
    };
    calibrate_with_rate(
        rate.omega_i,
        &CalibrationSpec {
            omega: Some(omega),
            ..*spec
        },
        seq,
        opts,
    )
}

/// Calibration with an explicitly given interaction rate.
pub fn calibrate_with_rate(
    omega_i: f64,
    spec: &CalibrationSpec,
    seq: &SequenceSpec,
    opts: &CalibrationOptions,
) -> Result<GateDesign> {
    seq.validate()?;
    if !(omega_i > 0.0) {
        return invalid("interaction rate must be positive");
    }
    if !(spec.target_phase > 0.0) {
        return invalid("target phase must be positive");
    }
    let omega = spec
        .omega
        .ok_or_else(|| Error::InvalidInput("local frequency missing".into()))?;
    let target = spec.target_phase;
    match spec.constraint {
        Constraint::FixedTau { tau } => {
            let base = DriveParams::with_tau(spec.eta, 1.0, spec.phi0, omega, tau)?;
            solve_rabi(omega_i, base, spec, seq, opts, spec.cap)
        }
        Constraint::FixedRabi { rabi } => {
            if !(rabi > 0.0) {
                return invalid("fixed |Omega| must be positive");
            }
            // Closure needs omega tau = 2 K pi, so tau is chosen as the shortest such
            // interval reaching the target at the available |Omega|; |Omega| is then
            // trimmed (never raised beyond the given value) to hit the target exactly.
            let at_k = |k: u32| DriveParams::with_k(spec.eta, rabi, spec.phi0, omega, k);
            let phase_at = |k: u32| -> Result<f64> {
                Ok(evaluate_design(&at_k(k)?, omega_i, seq, spec.mode, opts, None)?
                    .2
                    .total
                    .phi_c)
            };
            let k_cap = spec.cap.map_or(u32::MAX as f64, |t| (t * omega / TWO_PI).floor());
            let unit = sequence_closed_form(&at_k(1)?, omega_i, seq).max(f64::MIN_POSITIVE);
            let mut k = ((target / unit).cbrt().ceil() as u32).max(1);
            let reached = |v: f64| v >= target * (1.0 - opts.tolerance);
            while k > 1 && reached(phase_at(k - 1)?) {
                k -= 1;
            }
            while !reached(phase_at(k)?) {
                k += 1;
                if k as f64 > k_cap || k > 1_000_000 {
                    return Err(Error::Bracket(format!(
                        "|Omega| = {rabi:.6e} rad/s cannot reach the target phase within the tau cap"
                    )));
                }
            }
            let base = at_k(k)?;
            solve_rabi(omega_i, base, spec, seq, opts, Some(rabi * (1.0 + 1e-6)))
        }
    }
}

fn solve_rabi(
    omega_i: f64,
    base: DriveParams,
    spec: &CalibrationSpec,
    seq: &SequenceSpec,
    opts: &CalibrationOptions,
    cap: Option<f64>,
) -> Result<GateDesign> {
    let target = spec.target_phase;
    let unit = sequence_closed_form(&base.with_rabi(1.0), omega_i, seq);
    if !(unit > 0.0) {
        return invalid("closed-form phase is not positive at this interval; choose another tau");
    }
    let guess = (target / unit).sqrt();
    let mut warm: Option<Vec<f64>> = None;
    let mut evals = 0usize;
    let mut f = |x: f64| -> Result<f64> {
        evals += 1;
        let p = base.with_rabi(x);
        let (_, offsets, sp) = evaluate_design(&p, omega_i, seq, spec.mode, opts, warm.as_deref())?;
        if !offsets.is_empty() {
            warm = Some(offsets);
        }
        Ok(sp.total.phi_c - target)
    };
    let guess = cap.map_or(guess, |c| guess.min(c / 1.25));
    let (a, b, fa, fb) = bracket_positive(&mut f, guess, 1.25, cap, 40)?;
    let root = brent(
        &mut f,
        a,
        b,
        fa,
        fb,
        BrentOptions {
            xtol: 0.0,
            rtol: 1e-14,
            max_iter: 200,
        },
    )?;
    let drive = base.with_rabi(root.x);
    let (profile, _, sp) = evaluate_design(&drive, omega_i, seq, spec.mode, opts, warm.as_deref())?;
    let err = (sp.total.phi_c - target).abs() / target;
    if err > opts.tolerance {
        return Err(Error::NonConvergence {
            what: "controlled-phase calibration",
            iterations: evals,
            residual: err,
        });
    }
    Ok(GateDesign {
        gate_time: seq.base_intervals() as f64 * drive.tau,
        drive,
        profile,
        mode: spec.mode,
        sequence: seq.clone(),
        omega_i,
        total_phase: sp.total,
        per_interval: sp.per_interval,
        target_phase: target,
        max_closure_residual: sp.max_closure_residual,
        calibration_iterations: evals + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_tables() {
        assert_eq!(compose_sequence(1).unwrap().phase_flips, vec![0.0, PI]);
        assert_eq!(compose_sequence(2).unwrap().phase_flips, vec![0.0, PI, PI, 0.0]);
        assert_eq!(
            compose_sequence(3).unwrap().phase_flips,
            vec![0.0, PI, PI, 0.0, PI, 0.0, 0.0, PI]
        );
        assert!(compose_sequence(0).is_err());
        assert!(compose_sequence(4).is_err());
        assert_eq!(SequenceSpec::two_phi8().base_intervals(), 16);
    }

    #[test]
    fn zero_drive_has_zero_phase() {
        let p = DriveParams::with_k(0.05, 0.0, 0.0, TWO_PI, 1).unwrap();
        let sol = solve_trajectory(&PhaseProfile::lamb_dicke(p.tau), &p, &TrajectoryOptions::default()).unwrap();
        assert_eq!(conditional_phase(&sol, 0.1).unwrap(), ConditionalPhase::default());
    }

    #[test]
    fn mismatched_grids_rejected() {
        let p = DriveParams::with_k(0.01, 1.0, 0.0, TWO_PI, 1).unwrap();
        let mut sol = solve_trajectory(&PhaseProfile::lamb_dicke(p.tau), &p, &TrajectoryOptions::default()).unwrap();
        sol.alpha_minus.pop();
        assert!(conditional_phase(&sol, 0.1).is_err());
    }

    #[test]
    fn closed_form_limits() {
        let p = DriveParams::with_k(0.05, 3.0, 0.0, TWO_PI, 1).unwrap();
        let a = ld_phase_closed_form(&p, 0.1);
        let b = ld_phase_closed_form(&p.with_phi0(PI), 0.1);
        assert!((a - b).abs() <= 1e-15 * a);
        let q = ld_phase_closed_form(&p.with_phi0(FRAC_PI_2), 0.1);
        let two = two_phi8_closed_form(&p, 0.1);
        assert!((8.0 * (a + q) - two).abs() < 1e-12 * two);
    }

    #[test]
    fn fixed_rabi_recovers_fixed_tau_design() {
        let omega = TWO_PI;
        let wi = 0.05 * omega;
        let seq = compose_sequence(3).unwrap();
        let spec = CalibrationSpec::new(0.01, omega, Constraint::FixedTau { tau: 1.0 });
        let d = calibrate_with_rate(wi, &spec, &seq, &CalibrationOptions::default()).unwrap();
        assert!((d.total_phase.phi_c - FRAC_PI_4).abs() < 1e-8 * FRAC_PI_4);
        let dual = CalibrationSpec {
            constraint: Constraint::FixedRabi { rabi: d.drive.rabi },
            ..spec
        };
        let e = calibrate_with_rate(wi, &dual, &seq, &CalibrationOptions::default()).unwrap();
        assert_eq!(e.drive.k_multiple, Some(1));
        assert!((e.drive.rabi - d.drive.rabi).abs() < 1e-6 * d.drive.rabi);
        assert!((e.total_phase.phi_c - FRAC_PI_4).abs() < 1e-8 * FRAC_PI_4);
    }

    #[test]
    fn cap_below_solution_is_reported() {
        let omega = TWO_PI;
        let seq = compose_sequence(3).unwrap();
        let spec = CalibrationSpec {
            cap: Some(1.0),
            ..CalibrationSpec::new(0.01, omega, Constraint::FixedTau { tau: 1.0 })
        };
        let r = calibrate_with_rate(0.05 * omega, &spec, &seq, &CalibrationOptions::default());
        assert!(matches!(r, Err(Error::Bracket(_))), "{r:?}");
    }
}
