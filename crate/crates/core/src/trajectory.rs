//! Spin-dependent classical trajectory of a driven local mode.
//!
//! The amplitude obeys
//! `da/dt = -i w a + 2 i eta |Omega| sigma sin(eta (a + a*) + phi(t) + phi0)`, `a(0) = 0`,
//! with a piecewise-linear phase profile `phi(t)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::consts::TWO_PI;
use crate::error::{invalid, Error, Result};
use crate::ode::{Dopri5, Dopri5Options};
use crate::par::{self, Exec};
use crate::roots::{newton2, Newton2Options};

/// Relative tolerance for accepting omega * tau as a multiple of 2 pi.
pub const K_MULTIPLE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub eta: f64,
    /// |Omega| in rad/s.
    pub rabi: f64,
    pub phi0: f64,
    /// Local frequency in rad/s.
    pub omega: f64,
    /// Base interval in s.
    pub tau: f64,
    /// K with omega * tau = 2 K pi, when tau is such a multiple.
    pub k_multiple: Option<u32>,
}

fn detect_k(omega: f64, tau: f64) -> Option<u32> {
    let x = omega * tau / TWO_PI;
    let k = x.round();
    (k >= 1.0 && (x - k).abs() <= K_MULTIPLE_TOL * x).then_some(k as u32)
}

impl DriveParams {
    /// Parameters with tau = 2 K pi / omega.
    pub fn with_k(eta: f64, rabi: f64, phi0: f64, omega: f64, k: u32) -> Result<Self> {
        if k == 0 {
            return invalid("K must be at least 1");
        }
        let p = Self {
            eta,
            rabi,
            phi0,
            omega,
            tau: TWO_PI * k as f64 / omega,
            k_multiple: Some(k),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_tau(eta: f64, rabi: f64, phi0: f64, omega: f64, tau: f64) -> Result<Self> {
        let p = Self {
            eta,
            rabi,
            phi0,
            omega,
            tau,
            k_multiple: detect_k(omega, tau),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return invalid(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.rabi >= 0.0 && self.rabi.is_finite()) {
            return invalid(format!("|Omega| must be non-negative, got {}", self.rabi));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return invalid("local frequency must be positive");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return invalid("base interval must be positive");
        }
        if !self.phi0.is_finite() {
            return invalid("phi0 must be finite");
        }
        if let Some(k) = self.k_multiple {
            let rel = (self.omega * self.tau - TWO_PI * k as f64).abs() / (TWO_PI * k as f64);
            if rel > K_MULTIPLE_TOL {
                return invalid(format!("omega*tau is not 2*pi*{k} (relative mismatch {rel:.2e})"));
            }
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        TWO_PI / self.omega
    }

    pub fn with_rabi(&self, rabi: f64) -> Self {
        Self { rabi, ..*self }
    }

    pub fn with_phi0(&self, phi0: f64) -> Self {
        Self { phi0, ..*self }
    }

    /// Same drive with a new base interval (K recomputed).
    pub fn with_tau_value(&self, tau: f64) -> Self {
        Self {
            tau,
            k_multiple: detect_k(self.omega, tau),
            ..*self
        }
    }

    /// eta |Omega| tau.
    pub fn drive_area(&self) -> f64 {
        self.eta * self.rabi * self.tau
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    /// Slope sign of phi(t) = slope * omega * t + offset.
    pub slope: i8,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseProfile {
    pub segments: Vec<Segment>,
    /// Whether phi(t - tau/2) is even.
    pub symmetric: bool,
}

impl PhaseProfile {
    /// phi = omega t on the first half of the interval, omega t + pi on the second.
    pub fn lamb_dicke(tau: f64) -> Self {
        Self {
            segments: vec![
                Segment {
                    duration: 0.5 * tau,
                    slope: 1,
                    offset: 0.0,
                },
                Segment {
                    duration: 0.5 * tau,
                    slope: 1,
                    offset: PI,
                },
            ],
            symmetric: false,
        }
    }

    /// Profile whose first half consists of equal segments `(slope, offset)` and
    /// whose second half is the mirror image, phi(t) = phi(tau - t).
    pub fn symmetric(tau: f64, omega: f64, half: &[(i8, f64)]) -> Result<Self> {
        if half.is_empty() {
            return invalid("symmetric profile needs at least one segment per half");
        }
        if half.iter().any(|(s, _)| *s != 1 && *s != -1) {
            return invalid("segment slopes must be +1 or -1");
        }
        let d = 0.5 * tau / half.len() as f64;
        let mut segments: Vec<Segment> = half
            .iter()
            .map(|&(slope, offset)| Segment {
                duration: d,
                slope,
                offset,
            })
            .collect();
        for &(slope, offset) in half.iter().rev() {
            segments.push(Segment {
                duration: d,
                slope: -slope,
                offset: offset + slope as f64 * omega * tau,
            });
        }
        Ok(Self {
            segments,
            symmetric: true,
        })
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Segment start times followed by the end time.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.segments.len() + 1);
        let mut t = 0.0;
        b.push(t);
        for s in &self.segments {
            t += s.duration;
            b.push(t);
        }
        b
    }

    pub fn validate(&self, tau: f64) -> Result<()> {
        if self.segments.is_empty() {
            return invalid("phase profile has no segments");
        }
        for s in &self.segments {
            if !(s.duration > 0.0) || !s.offset.is_finite() || (s.slope != 1 && s.slope != -1) {
                return invalid(format!("malformed segment {s:?}"));
            }
        }
        let total = self.duration();
        if (total - tau).abs() > 1e-12 * tau {
            return invalid(format!("profile lasts {total:e} s but the base interval is {tau:e} s"));
        }
        if self.symmetric {
            let n = self.segments.len();
            for i in 0..n / 2 {
                let (a, b) = (self.segments[i], self.segments[n - 1 - i]);
                if (a.duration - b.duration).abs() > 1e-12 * tau || a.slope != -b.slope {
                    return invalid("profile flagged symmetric is not mirror-symmetric");
                }
            }
        }
        Ok(())
    }

    fn segment_index(&self, t: f64) -> usize {
        let mut acc = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            acc += s.duration;
            if t < acc {
                return i;
            }
        }
        self.segments.len() - 1
    }

    /// Controlled phase phi(t) (excluding phi0).
    pub fn phase(&self, t: f64, omega: f64) -> f64 {
        let s = self.segments[self.segment_index(t)];
        s.slope as f64 * omega * t + s.offset
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOptions {
    pub samples_per_period: usize,
    pub rtol: f64,
    /// Absolute tolerance in units of eta |Omega| tau.
    pub atol_scale: f64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            samples_per_period: 200,
            rtol: 1e-10,
            atol_scale: 1e-10,
            exec: Exec::Parallel,
        }
    }
}

/// Sample grid: uniform pieces between phase-profile boundaries (and tau/2),
/// each with a multiple of four intervals so Simpson's rule and its
/// half-resolution Richardson check both apply.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub times: Vec<f64>,
    pub breaks: Vec<usize>,
    pub piece_segment: Vec<usize>,
    pub mid_index: usize,
}

impl Grid {
    pub fn new(profile: &PhaseProfile, params: &DriveParams, samples_per_period: usize) -> Self {
        let tau = params.tau;
        let mut pts = profile.boundaries();
        pts.push(0.5 * tau);
        pts.sort_by(|a, b| a.total_cmp(b));
        let mut merged: Vec<f64> = Vec::new();
        for p in pts {
            match merged.last_mut() {
                Some(last) if (p - *last).abs() <= 1e-12 * tau => {
                    if (p - 0.5 * tau).abs() <= 1e-12 * tau {
                        *last = 0.5 * tau;
                    }
                }
                _ => merged.push(p),
            }
        }
        *merged.last_mut().unwrap() = tau;
        let mut times = vec![0.0];
        let mut breaks = vec![0];
        let mut piece_segment = Vec::new();
        let mut mid_index = 0;
        for w in merged.windows(2) {
            let (a, b) = (w[0], w[1]);
            let cycles = (b - a) / params.period();
            let mut n = (samples_per_period as f64 * cycles).ceil() as usize;
            n = n.max(4).div_ceil(4) * 4;
            let h = (b - a) / n as f64;
            for j in 1..n {
                times.push(a + j as f64 * h);
            }
            times.push(b);
            breaks.push(times.len() - 1);
            piece_segment.push(profile.segment_index(0.5 * (a + b)));
            if b == 0.5 * tau {
                mid_index = times.len() - 1;
            }
        }
        Self {
            times,
            breaks,
            piece_segment,
            mid_index,
        }
    }
}

fn atol(params: &DriveParams, opts: &TrajectoryOptions) -> f64 {
    (opts.atol_scale * params.drive_area()).max(f64::MIN_POSITIVE)
}

fn rhs(params: &DriveParams, sigma: f64, seg: Segment) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] {
    let w = params.omega;
    let amp = 2.0 * params.eta * params.rabi * sigma;
    let two_eta = 2.0 * params.eta;
    let slope = seg.slope as f64 * w;
    let off = seg.offset + params.phi0;
    move |t, y| [w * y[1], -w * y[0] + amp * (two_eta * y[0] + slope * t + off).sin()]
}

fn check_sigma(sigma: i8) -> Result<f64> {
    match sigma {
        1 => Ok(1.0),
        -1 => Ok(-1.0),
        _ => invalid("sigma must be +1 or -1"),
    }
}

fn integrator(params: &DriveParams, opts: &TrajectoryOptions) -> Dopri5<2> {
    Dopri5::new(
        Dopri5Options {
            atol: atol(params, opts),
            rtol: opts.rtol,
            ..Dopri5Options::default()
        },
        params.period() / 20.0,
    )
}

/// Integrate one spin branch on a precomputed grid.
pub fn integrate_on_grid(
    profile: &PhaseProfile,
    params: &DriveParams,
    sigma: i8,
    grid: &Grid,
    opts: &TrajectoryOptions,
) -> Result<Vec<Complex64>> {
    let s = check_sigma(sigma)?;
    let mut out = vec![Complex64::new(0.0, 0.0); grid.times.len()];
    if params.rabi == 0.0 {
        return Ok(out);
    }
    let mut ig = integrator(params, opts);
    let mut y = [0.0, 0.0];
    for (p, w) in grid.breaks.windows(2).enumerate() {
        let f = rhs(params, s, profile.segments[grid.piece_segment[p]]);
        for i in w[0]..w[1] {
            ig.integrate(&f, grid.times[i], grid.times[i + 1], &mut y)?;
            out[i + 1] = Complex64::new(y[0], y[1]);
        }
    }
    Ok(out)
}

/// Integrate from 0 to `t_end` without storing samples.
pub fn propagate(
    profile: &PhaseProfile,
    params: &DriveParams,
    sigma: i8,
    t_end: f64,
    opts: &TrajectoryOptions,
) -> Result<Complex64> {
    let s = check_sigma(sigma)?;
    if params.rabi == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let mut ig = integrator(params, opts);
    let mut y = [0.0, 0.0];
    let mut t = 0.0;
    for seg in &profile.segments {
        if t >= t_end {
            break;
        }
        let end = (t + seg.duration).min(t_end);
        let end = if (end - t_end).abs() <= 1e-12 * params.tau {
            t_end
        } else {
            end
        };
        ig.integrate(&rhs(params, s, *seg), t, end, &mut y)?;
        t += seg.duration;
    }
    Ok(Complex64::new(y[0], y[1]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchSolution {
    pub times: Vec<f64>,
    pub alpha: Vec<Complex64>,
}

/// Integrate one spin branch over the base interval.
pub fn integrate_alpha(
    profile: &PhaseProfile,
    params: &DriveParams,
    sigma: i8,
    opts: &TrajectoryOptions,
) -> Result<BranchSolution> {
    params.validate()?;
    profile.validate(params.tau)?;
    let grid = Grid::new(profile, params, opts.samples_per_period);
    let alpha = integrate_on_grid(profile, params, sigma, &grid, opts)?;
    Ok(BranchSolution {
        times: grid.times,
        alpha,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySolution {
    pub times: Vec<f64>,
    /// Grid indices delimiting the uniform pieces.
    pub breaks: Vec<usize>,
    pub mid_index: usize,
    pub alpha_plus: Vec<Complex64>,
    pub alpha_minus: Vec<Complex64>,
    /// max(|a+(tau)|, |a-(tau)|).
    pub closure_residual: f64,
    /// Im a(tau/2) for sigma = +1 and -1.
    pub midpoint_imag: [f64; 2],
}

impl TrajectorySolution {
    pub fn max_abs(&self) -> f64 {
        self.alpha_plus
            .iter()
            .chain(&self.alpha_minus)
            .fold(0.0, |m, a| m.max(a.norm()))
    }

    /// Rows of (t, Re a+, Im a+, Re a-, Im a-).
    pub fn records(&self) -> Vec<[f64; 5]> {
        self.times
            .iter()
            .zip(self.alpha_plus.iter().zip(&self.alpha_minus))
            .map(|(&t, (p, m))| [t, p.re, p.im, m.re, m.im])
            .collect()
    }
}

/// Integrate both spin branches on a common grid.
pub fn solve_trajectory(
    profile: &PhaseProfile,
    params: &DriveParams,
    opts: &TrajectoryOptions,
) -> Result<TrajectorySolution> {
    params.validate()?;
    profile.validate(params.tau)?;
    let grid = Grid::new(profile, params, opts.samples_per_period);
    let (plus, minus) = par::join(
        opts.exec,
        || integrate_on_grid(profile, params, 1, &grid, opts),
        || integrate_on_grid(profile, params, -1, &grid, opts),
    );
    let (plus, minus) = (plus?, minus?);
    let last = grid.times.len() - 1;
    Ok(TrajectorySolution {
        closure_residual: plus[last].norm().max(minus[last].norm()),
        midpoint_imag: [plus[grid.mid_index].im, minus[grid.mid_index].im],
        times: grid.times,
        breaks: grid.breaks,
        mid_index: grid.mid_index,
        alpha_plus: plus,
        alpha_minus: minus,
    })
}

/// Closed-form Lamb-Dicke solution for the two-segment profile.
pub fn analytic_ld_alpha(t: f64, params: &DriveParams, sigma: i8) -> Complex64 {
    let w = params.omega;
    let tau = params.tau;
    let phi0 = params.phi0;
    let a0 = params.eta * params.rabi * sigma as f64;
    let i = Complex64::i();
    let rot = (-i * w * t).exp();
    let bracket = if t <= 0.5 * tau {
        (i * (w * t + phi0)).exp() * (w * t).sin() - w * t * (-i * phi0).exp()
    } else {
        let h = 0.5 * w * tau;
        -(i * (w * t + h + phi0)).exp() * (w * (t - 0.5 * tau)).sin()
            + (i * (h + phi0)).exp() * h.sin()
            + w * (t - tau) * (-i * phi0).exp()
    };
    a0 * rot * bracket / w
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosureReport {
    /// |a+(tau)| / max|a|.
    pub residual_plus: f64,
    pub residual_minus: f64,
    pub max_alpha: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn closure_check(solution: &TrajectorySolution, tolerance: f64) -> ClosureReport {
    let max_alpha = solution.max_abs();
    let last = solution.times.len() - 1;
    let norm = |a: Complex64| if max_alpha > 0.0 { a.norm() / max_alpha } else { 0.0 };
    let residual_plus = norm(solution.alpha_plus[last]);
    let residual_minus = norm(solution.alpha_minus[last]);
    ClosureReport {
        residual_plus,
        residual_minus,
        max_alpha,
        tolerance,
        pass: residual_plus.max(residual_minus) <= tolerance,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignOptions {
    pub segments_per_half: usize,
    /// Slopes of the first-half segments; all +1 when absent.
    pub slopes: Option<Vec<i8>>,
    /// Relative closure below which the two-segment profile is kept as is.
    pub ld_tolerance: f64,
    /// Target |Im a(tau/2)| relative to max|a|.
    pub midpoint_tolerance: f64,
    /// Required closure of the re-integrated designed profile.
    pub closure_tolerance: f64,
    /// Multi-start grid resolution per free offset.
    pub starts_per_axis: usize,
    pub trajectory: TrajectoryOptions,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            segments_per_half: 2,
            slopes: None,
            ld_tolerance: 1e-6,
            midpoint_tolerance: 1e-8,
            closure_tolerance: 1e-6,
            starts_per_axis: 6,
            trajectory: TrajectoryOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub profile: PhaseProfile,
    /// First-half offsets of a designed profile; empty for the two-segment profile.
    pub offsets: Vec<f64>,
    /// max |Im a(tau/2)| / max|a| of the returned profile.
    pub midpoint_residual: f64,
    pub closure: ClosureReport,
}

fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TWO_PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Design a closed symmetric profile with `segments_per_half` segments per half interval.
pub fn design_phase_profile(params: &DriveParams, segments_per_half: usize) -> Result<PhaseProfile> {
    let opts = DesignOptions {
        segments_per_half,
        ..DesignOptions::default()
    };
    Ok(design_phase_profile_with(params, &opts, None)?.profile)
}

/// Full design entry point. `warm` offsets (from a nearby drive) are tried first
/// so that a calibration sweep follows one continuous solution branch.
pub fn design_phase_profile_with(params: &DriveParams, opts: &DesignOptions, warm: Option<&[f64]>) -> Result<Design> {
    params.validate()?;
    let topts = opts.trajectory;
    let ld = PhaseProfile::lamb_dicke(params.tau);
    let ld_sol = solve_trajectory(&ld, params, &topts)?;
    let ld_closure = closure_check(&ld_sol, opts.ld_tolerance);
    if params.rabi == 0.0 || ld_closure.pass {
        return Ok(Design {
            profile: ld,
            offsets: Vec::new(),
            midpoint_residual: 0.0,
            closure: ld_closure,
        });
    }
    let n = opts.segments_per_half;
    if n < 2 {
        return Err(Error::Bracket(
            "closing both spin branches outside the Lamb-Dicke regime needs at least two \
             segments per half interval; increase segments or reduce eta|Omega|/omega"
                .into(),
        ));
    }
    let slopes = match &opts.slopes {
        Some(s) if s.len() == n => s.clone(),
        Some(s) => return invalid(format!("{} slopes given for {n} segments", s.len())),
        None => vec![1; n],
    };
    let scale = 0.5 * params.drive_area();
    let build = |x: [f64; 2]| -> Result<PhaseProfile> {
        let mut half: Vec<(i8, f64)> = slopes.iter().map(|&s| (s, 0.0)).collect();
        half[n - 2].1 = x[0];
        half[n - 1].1 = x[1];
        PhaseProfile::symmetric(params.tau, params.omega, &half)
    };
    let mid = |x: [f64; 2]| -> Result<(Complex64, Complex64)> {
        let p = build(x)?;
        let a = propagate(&p, params, 1, 0.5 * params.tau, &topts)?;
        let b = propagate(&p, params, -1, 0.5 * params.tau, &topts)?;
        Ok((a, b))
    };
    let g = |x: [f64; 2]| -> Result<[f64; 2]> {
        let (a, b) = mid(x)?;
        Ok([a.im / scale, b.im / scale])
    };
    let newton = Newton2Options {
        ftol: 0.25 * opts.midpoint_tolerance,
        ..Newton2Options::default()
    };
    let mut best: Option<([f64; 2], f64)> = None;
    if let Some(w) = warm {
        if w.len() == n {
            if let Ok((x, _)) = newton2(g, [w[n - 2], w[n - 1]], newton) {
                best = Some((x, 0.0));
            }
        }
    }
    if best.is_none() {
        let m = opts.starts_per_axis.max(1);
        for i in 0..m {
            for j in 0..m {
                let x0 = [
                    -PI + (i as f64 + 0.5) * TWO_PI / m as f64,
                    -PI + (j as f64 + 0.5) * TWO_PI / m as f64,
                ];
                let Ok((x, _)) = newton2(g, x0, newton) else {
                    continue;
                };
                let (a, b) = mid(x)?;
                let eff = (a.re - b.re).abs();
                if best.is_none_or(|(_, e)| eff > e * (1.0 + 1e-9)) {
                    best = Some((x, eff));
                }
            }
        }
    }
    let Some((x, _)) = best else {
        return Err(Error::Bracket(
            "no offsets close both spin branches; try more segments or a smaller eta|Omega|/omega".into(),
        ));
    };
    let x = [wrap_phase(x[0]), wrap_phase(x[1])];
    let profile = build(x)?;
    let sol = solve_trajectory(&profile, params, &topts)?;
    let closure = closure_check(&sol, opts.closure_tolerance);
    let max_alpha = sol.max_abs();
    let midpoint_residual = sol.midpoint_imag[0].abs().max(sol.midpoint_imag[1].abs()) / max_alpha;
    if midpoint_residual > opts.midpoint_tolerance || !closure.pass {
        return Err(Error::NonConvergence {
            what: "phase-profile design",
            iterations: newton.max_iter,
            residual: midpoint_residual.max(closure.residual_plus.max(closure.residual_minus)),
        });
    }
    let mut offsets: Vec<f64> = vec![0.0; n];
    offsets[n - 2] = x[0];
    offsets[n - 1] = x[1];
    Ok(Design {
        profile,
        offsets,
        midpoint_residual,
        closure,
    })
}
