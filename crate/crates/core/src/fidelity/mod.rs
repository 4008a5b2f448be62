//! Gate infidelity: closed-form estimates and exact branch-wise simulation.

pub mod ops;
pub mod sim;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::par;
use crate::sequence::GateDesign;
use crate::trajectory::{propagate, DriveParams, TrajectoryOptions};
use sim::{
    build_hamiltonian_branches, evolve_branch, evolve_checked, fock_state, inner, schedule, swap_modes, top_population,
    OpsCache, SimConfig, SimModel,
};

type C = Complex64;

/// Thermal-bath infidelity w_I tau (eta|Omega|tau)^2 (2 n_c w_I tau)^7 (2 nbar + 1), times `blocks`.
pub fn analytic_infidelity(params: &DriveParams, omega_i: f64, n_c: f64, nbar: f64, blocks: usize) -> f64 {
    let wt = omega_i * params.tau;
    wt * params.drive_area().powi(2) * (2.0 * n_c * wt).powi(7) * (2.0 * nbar + 1.0) * blocks as f64
}

/// Higher-order Lamb-Dicke infidelity (pi^2/2) eta^4 (nbar + 1/2)^2.
pub fn higher_order_ld_infidelity(eta: f64, nbar: f64) -> f64 {
    0.5 * PI * PI * eta.powi(4) * (nbar + 0.5).powi(2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalSpec {
    pub nbar: f64,
    /// Minimum retained probability of the enumerated Fock configurations.
    pub weight_cutoff: f64,
}

impl Default for ThermalSpec {
    fn default() -> Self {
        Self {
            nbar: 0.0,
            weight_cutoff: 1.0 - 1e-3,
        }
    }
}

impl ThermalSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.nbar >= 0.0 && self.nbar.is_finite()) {
            return invalid("nbar must be non-negative");
        }
        if !(self.weight_cutoff > 0.0 && self.weight_cutoff <= 1.0) {
            return invalid("weight_cutoff must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Occupation numbers with their thermal probability.
pub type Configuration = (Vec<usize>, f64);

/// Fock configurations of `modes` independent thermal modes, in order of
/// decreasing probability (total occupation shells, lexicographic within a
/// shell). Whole shells are kept until the retained weight reaches the cutoff.
pub fn thermal_configurations(modes: usize, spec: &ThermalSpec) -> Result<(Vec<Configuration>, f64)> {
    spec.validate()?;
    let nb = spec.nbar;
    let p0 = (1.0 / (nb + 1.0)).powi(modes as i32);
    let r = nb / (nb + 1.0);
    let mut out = Vec::new();
    let mut total = 0.0;
    for shell in 0..10_000usize {
        let w = p0 * r.powi(shell as i32);
        let mut cfgs = Vec::new();
        compositions(modes, shell, &mut vec![0; modes], 0, &mut cfgs);
        for c in cfgs {
            total += w;
            out.push((c, w));
        }
        if total >= spec.weight_cutoff || nb == 0.0 {
            return Ok((out, total));
        }
    }
    Err(Error::Truncation {
        weight: total,
        cutoff: spec.weight_cutoff,
    })
}

fn compositions(modes: usize, left: usize, cur: &mut Vec<usize>, pos: usize, out: &mut Vec<Vec<usize>>) {
    if pos == modes - 1 {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k;
        compositions(modes, left - k, cur, pos + 1, out);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub spins: [i8; 2],
    /// Thermal average of |<psi_free|psi_branch>|.
    pub return_overlap: f64,
    /// Phase of the thermally averaged overlap with the drive-free evolution.
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct FidelityReport {
    #[serde(rename = "dF_analytic")]
    pub df_analytic: f64,
    #[serde(rename = "dF_higher_order")]
    pub df_higher_order: f64,
    #[serde(rename = "dF_numeric")]
    pub df_numeric: f64,
    pub fidelity: f64,
    pub target_phase: f64,
    /// Optimal single-qubit z phases (a, b).
    pub correction: [f64; 2],
    /// Empty when the drive-free reference is not tracked.
    pub branch_phases: Vec<BranchRecord>,
    pub nbar: f64,
    pub configurations: usize,
    pub retained_weight: f64,
    pub max_norm_drift: f64,
    pub max_leakage: f64,
    pub dt: f64,
    /// 1 - |<psi_dt|psi_dt/2>| for the ground configuration, when checked.
    pub dt_halving_change: Option<f64>,
}

const BRANCHES: [[i8; 2]; 4] = [[1, 1], [1, -1], [-1, 1], [-1, -1]];

/// Branch-label permutation under exchange of the two ions.
const SWAP_LABEL: [usize; 4] = [0, 2, 1, 3];

#[derive(Clone, Debug)]
struct ConfigResult {
    gram: [[C; 4]; 4],
    ret: [C; 4],
    norm_drift: f64,
    leakage: f64,
    dt: f64,
}

fn simulate_config(
    model: &SimModel,
    design: &GateDesign,
    sim: &SimConfig,
    occupation: &[usize],
    dt: f64,
) -> Result<ConfigResult> {
    // Hopping between modes can move every quantum into one mode.
    let total: usize = occupation.iter().sum();
    let dims = vec![total + sim.fock_cutoff; occupation.len()];
    let mut cache = OpsCache::new(design.drive.eta);
    let hams = build_hamiltonian_branches(model, design.drive.rabi, &dims, &mut cache)?;
    let free = build_hamiltonian_branches(model, 0.0, &dims, &mut cache)?;
    let pieces = schedule(design);
    let psi0 = fock_state(&dims, occupation)?;
    let reuse_swap = model.swap_symmetric() && occupation[0] == occupation[1];
    let mut states: Vec<Vec<C>> = Vec::with_capacity(4);
    let mut norm_drift: f64 = 0.0;
    let mut used_dt: f64 = dt;
    for (k, ham) in hams.iter().enumerate() {
        if reuse_swap && k == 2 {
            states.push(swap_modes(&dims, &states[1]));
            continue;
        }
        let ev = evolve_checked(ham, &psi0, &pieces, dt, sim.norm_tolerance, sim.max_refinements)?;
        norm_drift = norm_drift.max(ev.norm_drift);
        used_dt = used_dt.min(ev.dt);
        states.push(ev.psi);
    }
    let reference = if !sim.track_return || model.pairs.is_empty() {
        psi0.clone()
    } else {
        let ev = evolve_checked(&free[0], &psi0, &pieces, dt, sim.norm_tolerance, sim.max_refinements)?;
        norm_drift = norm_drift.max(ev.norm_drift);
        ev.psi
    };
    let mut leakage: f64 = 0.0;
    for s in &states {
        leakage = leakage.max(top_population(&dims, s).into_iter().fold(0.0, f64::max));
    }
    let mut gram = [[C::default(); 4]; 4];
    let mut ret = [C::default(); 4];
    for i in 0..4 {
        ret[i] = inner(&reference, &states[i]);
        for j in 0..4 {
            gram[i][j] = inner(&states[i], &states[j]);
        }
    }
    Ok(ConfigResult {
        gram,
        ret,
        norm_drift,
        leakage,
        dt: used_dt,
    })
}

/// F = u^dagger G u with u_s = c_s^2 exp(-i theta_s),
/// theta_s = phi s1 s2 + a s1 + b s2.
pub fn spin_fidelity(gram: &[[C; 4]; 4], amps: &[f64; 4], phi: f64, a: f64, b: f64) -> f64 {
    let mut u = [C::default(); 4];
    for (k, s) in BRANCHES.iter().enumerate() {
        let (s1, s2) = (s[0] as f64, s[1] as f64);
        u[k] = C::from_polar(amps[k] * amps[k], -(phi * s1 * s2 + a * s1 + b * s2));
    }
    let mut f = C::default();
    for i in 0..4 {
        for j in 0..4 {
            f += u[i].conj() * gram[i][j] * u[j];
        }
    }
    f.re
}

/// Maximize `spin_fidelity` over the two z phases by exact coordinate ascent.
pub fn optimize_z_phases(gram: &[[C; 4]; 4], amps: &[f64; 4], phi: f64) -> (f64, [f64; 2]) {
    // For fixed b, F(a) = A + 2 Re(B e^{2ia}); B collects pairs with s1 = +1, s1' = -1.
    let coord = |fixed: f64, which: usize, gram: &[[C; 4]; 4]| -> f64 {
        let mut u = [C::default(); 4];
        for (k, s) in BRANCHES.iter().enumerate() {
            let (s1, s2) = (s[0] as f64, s[1] as f64);
            let other = if which == 0 { s2 } else { s1 };
            u[k] = C::from_polar(amps[k] * amps[k], -(phi * s1 * s2 + fixed * other));
        }
        let mut bsum = C::default();
        for i in 0..4 {
            for j in 0..4 {
                if BRANCHES[i][which] == 1 && BRANCHES[j][which] == -1 {
                    bsum += u[i].conj() * gram[i][j] * u[j];
                }
            }
        }
        // F contains e^{i(theta_i - theta_j)} = e^{2ia} for this pair class.
        -bsum.arg() / 2.0
    };
    let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
    for sa in 0..4 {
        for sb in 0..4 {
            let (mut a, mut b) = (sa as f64 * PI / 2.0, sb as f64 * PI / 2.0);
            let mut f = spin_fidelity(gram, amps, phi, a, b);
            for _ in 0..500 {
                a = coord(b, 0, gram);
                b = coord(a, 1, gram);
                let fn_ = spin_fidelity(gram, amps, phi, a, b);
                let done = (fn_ - f).abs() <= 1e-16;
                f = fn_;
                if done {
                    break;
                }
            }
            if f > best.0 + 1e-15 {
                best = (f, [a, b]);
            }
        }
    }
    best
}

/// Exact-simulation fidelity of the controlled-phase gate realized by `design`
/// on the thermal ensemble, after optimal single-qubit z-phase correction.
pub fn numeric_gate_fidelity(
    model: &SimModel,
    design: &GateDesign,
    sim: &SimConfig,
    thermal: &ThermalSpec,
) -> Result<FidelityReport> {
    let mut reports = thermal_sweep(model, design, sim, &[thermal.nbar], thermal.weight_cutoff)?;
    Ok(reports.remove(0))
}

/// Fidelity reports for several thermal occupations of the same design.
/// Each Fock configuration is simulated once and reweighted for every level,
/// so the results equal separate `numeric_gate_fidelity` calls.
pub fn thermal_sweep(
    model: &SimModel,
    design: &GateDesign,
    sim: &SimConfig,
    levels: &[f64],
    weight_cutoff: f64,
) -> Result<Vec<FidelityReport>> {
    sim.validate()?;
    if model.driven != 2 {
        return invalid("gate fidelity needs two driven ions");
    }
    if levels.is_empty() {
        return invalid("thermal sweep needs at least one occupation");
    }
    let ensembles = levels
        .iter()
        .map(|&nbar| thermal_configurations(model.n_modes(), &ThermalSpec { nbar, weight_cutoff }))
        .collect::<Result<Vec<_>>>()?;
    let dt = sim.step(model);
    let symmetric = model.swap_symmetric();
    // Configurations whose mirror image is already covered by swap symmetry are skipped.
    let mut index: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut work: Vec<Vec<usize>> = Vec::new();
    for (configs, _) in &ensembles {
        for (occ, _) in configs {
            let key = if symmetric && occ[0] > occ[1] {
                vec![occ[1], occ[0]]
            } else {
                occ.clone()
            };
            if !index.contains_key(&key) {
                index.insert(key.clone(), work.len());
                work.push(key);
            }
        }
    }
    let results = par::map(sim.exec, &work, |occ| simulate_config(model, design, sim, occ, dt));
    let results = par::collect_ordered(results)?;
    let halving = if sim.check_convergence {
        Some(halving_change(model, design, sim, dt)?)
    } else {
        None
    };
    levels
        .iter()
        .zip(&ensembles)
        .map(|(&nbar, (configs, weight))| {
            let lookup = |occ: &Vec<usize>| -> (&ConfigResult, bool) {
                if symmetric && occ[0] > occ[1] {
                    (&results[index[&vec![occ[1], occ[0]]]], true)
                } else {
                    (&results[index[occ]], false)
                }
            };
            aggregate(design, sim, model, nbar, configs, *weight, lookup, dt, halving)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn aggregate<'a>(
    design: &GateDesign,
    sim: &SimConfig,
    model: &SimModel,
    nbar: f64,
    configs: &[(Vec<usize>, f64)],
    weight: f64,
    lookup: impl Fn(&Vec<usize>) -> (&'a ConfigResult, bool),
    dt: f64,
    dt_halving_change: Option<f64>,
) -> Result<FidelityReport> {
    let mut gram = [[C::default(); 4]; 4];
    let mut ret = [C::default(); 4];
    let mut ret_abs = [0.0; 4];
    let (mut drift, mut leak, mut used_dt): (f64, f64, f64) = (0.0, 0.0, dt);
    for (occ, p) in configs {
        let (r, mirrored) = lookup(occ);
        let w = p / weight;
        for i in 0..4 {
            let si = if mirrored { SWAP_LABEL[i] } else { i };
            ret[i] += w * r.ret[si];
            ret_abs[i] += w * r.ret[si].norm();
            for j in 0..4 {
                let sj = if mirrored { SWAP_LABEL[j] } else { j };
                gram[i][j] += w * r.gram[si][sj];
            }
        }
        drift = drift.max(r.norm_drift);
        leak = leak.max(r.leakage);
        used_dt = used_dt.min(r.dt);
    }
    if leak > sim.leakage_tolerance {
        return Err(Error::Leakage {
            mode: 0,
            population: leak,
        });
    }
    let phi = design.total_phase.phi_c;
    let (f, correction) = optimize_z_phases(&gram, &sim.spin_input, phi);
    let blocks = design.sequence.blocks();
    let branch_phases = if sim.track_return {
        (0..4)
            .map(|i| BranchRecord {
                spins: BRANCHES[i],
                return_overlap: ret_abs[i],
                phase: ret[i].arg(),
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(FidelityReport {
        df_analytic: analytic_infidelity(&design.drive, design.omega_i, model.coordination, nbar, blocks),
        df_higher_order: higher_order_ld_infidelity(design.drive.eta, nbar),
        df_numeric: 1.0 - f,
        fidelity: f,
        target_phase: phi,
        correction,
        branch_phases,
        nbar,
        configurations: configs.len(),
        retained_weight: weight,
        max_norm_drift: drift,
        max_leakage: leak,
        dt: used_dt,
        dt_halving_change,
    })
}

fn halving_change(model: &SimModel, design: &GateDesign, sim: &SimConfig, dt: f64) -> Result<f64> {
    let dims = vec![sim.fock_cutoff; model.n_modes()];
    let mut cache = OpsCache::new(design.drive.eta);
    let hams = build_hamiltonian_branches(model, design.drive.rabi, &dims, &mut cache)?;
    let psi0 = fock_state(&dims, &vec![0; model.n_modes()])?;
    let pieces = schedule(design);
    let a = evolve_branch(&hams[0], &psi0, &pieces, dt, None);
    let b = evolve_branch(&hams[0], &psi0, &pieces, 0.5 * dt, None);
    Ok(1.0 - inner(&a, &b).norm())
}

/// Single-ion Ehrenfest comparison: <a(t)> from the exact evolution sampled
/// at every step, for spin +1 starting in the vacuum.
pub fn ehrenfest_trace(model: &SimModel, design: &GateDesign, sim: &SimConfig) -> Result<Vec<(f64, C)>> {
    sim.validate()?;
    if model.driven != 1 || model.n_modes() != 1 {
        return invalid("Ehrenfest trace needs a single-ion model");
    }
    let dims = vec![sim.fock_cutoff];
    let mut cache = OpsCache::new(design.drive.eta);
    let hams = build_hamiltonian_branches(model, design.drive.rabi, &dims, &mut cache)?;
    let psi0 = fock_state(&dims, &[0])?;
    let pieces = schedule(design);
    let w = model.freqs[0];
    let mut trace = Vec::new();
    let mut obs = |t: f64, psi: &[C]| trace.push((t, sim::mean_annihilation(&dims, psi, 0, w, t)));
    let psi = evolve_branch(&hams[0], &psi0, &pieces, sim.step(model), Some(&mut obs));
    let leak = top_population(&dims, &psi)[0];
    if leak > sim.leakage_tolerance {
        return Err(Error::Leakage {
            mode: 0,
            population: leak,
        });
    }
    Ok(trace)
}

/// Largest |<a(t)> - alpha_+(t)| over the first base interval, relative to
/// max |alpha_+|, comparing the single-ion quantum evolution with the
/// classical trajectory. Every `stride`-th integrator step is compared.
pub fn ehrenfest_deviation(
    model: &SimModel,
    design: &GateDesign,
    sim: &SimConfig,
    stride: usize,
    trajectory: &TrajectoryOptions,
) -> Result<EhrenfestReport> {
    let trace = ehrenfest_trace(model, design, sim)?;
    let tau = design.drive.tau;
    let samples: Vec<(f64, C)> = trace
        .into_iter()
        .filter(|(t, _)| *t <= tau * (1.0 + 1e-12))
        .step_by(stride.max(1))
        .collect();
    let classical = par::map(trajectory.exec, &samples, |(t, _)| {
        propagate(&design.profile, &design.drive, 1, *t, trajectory)
    });
    let classical = par::collect_ordered(classical)?;
    let max_alpha = classical.iter().fold(0.0, |m: f64, a| m.max(a.norm()));
    let max_error = samples
        .iter()
        .zip(&classical)
        .fold(0.0, |m: f64, ((_, q), c)| m.max((q - c).norm()));
    Ok(EhrenfestReport {
        max_error,
        max_alpha,
        relative_error: if max_alpha > 0.0 {
            max_error / max_alpha
        } else {
            max_error
        },
        samples: samples.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EhrenfestReport {
    pub max_error: f64,
    pub max_alpha: f64,
    pub relative_error: f64,
    pub samples: usize,
}

/// Least-squares line y = slope x + intercept with its coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return invalid("linear fit needs at least two paired points");
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return invalid("linear fit needs distinct abscissae");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thermal_weights() {
        let (c, w) = thermal_configurations(
            2,
            &ThermalSpec {
                nbar: 0.0,
                weight_cutoff: 0.999,
            },
        )
        .unwrap();
        assert_eq!(c, vec![(vec![0, 0], 1.0)]);
        assert_eq!(w, 1.0);
        let (c, w) = thermal_configurations(
            2,
            &ThermalSpec {
                nbar: 1.0,
                weight_cutoff: 0.999,
            },
        )
        .unwrap();
        assert!((0.999..1.0).contains(&w));
        // Descending probability order.
        assert!(c.windows(2).all(|p| p[0].1 >= p[1].1));
        // Single-mode weights are geometric.
        let (c1, _) = thermal_configurations(
            1,
            &ThermalSpec {
                nbar: 2.0,
                weight_cutoff: 0.9,
            },
        )
        .unwrap();
        let expect = |n: i32| 2f64.powi(n) / 3f64.powi(n + 1);
        for (k, (occ, p)) in c1.iter().enumerate() {
            assert_eq!(occ[0], k);
            assert!((p - expect(k as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn formula_values() {
        let v = higher_order_ld_infidelity(0.05, 0.5);
        assert!((v - 0.5 * PI * PI * 0.05f64.powi(4)).abs() < 1e-20);
        assert_eq!(higher_order_ld_infidelity(0.0, 3.0), 0.0);
        let p = DriveParams::with_k(0.05, 1e7, 0.0, 1e7, 3).unwrap();
        let a0 = analytic_infidelity(&p, 1e4, 2.0, 0.0, 1);
        let a1 = analytic_infidelity(&p, 1e4, 2.0, 1.0, 1);
        assert!((a1 / a0 - 3.0).abs() < 1e-15);
        assert!((analytic_infidelity(&p, 1e4, 2.0, 1.0, 2) / a1 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn z_phase_optimizer_recovers_known_phases() {
        // Pure product of ideal branch phases: G = v v^dagger with v_s = e^{i theta_s}.
        let (phi, a, b) = (0.7, 0.3, -1.1);
        let mut v = [C::default(); 4];
        for (k, s) in BRANCHES.iter().enumerate() {
            let (s1, s2) = (s[0] as f64, s[1] as f64);
            v[k] = C::from_polar(1.0, phi * s1 * s2 + a * s1 + b * s2);
        }
        let mut g = [[C::default(); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                g[i][j] = v[i].conj() * v[j];
            }
        }
        let (f, _) = optimize_z_phases(&g, &[0.5; 4], phi);
        assert!((f - 1.0).abs() < 1e-12, "{f}");
        let (fw, _) = optimize_z_phases(&g, &[0.5; 4], phi + 0.2);
        assert!(fw < 0.99);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-14 && (f.intercept + 1.0).abs() < 1e-13);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        let noisy = [1.0, 3.0, 2.0, 4.0];
        assert!(linear_fit(&x, &noisy).unwrap().r_squared < 0.9);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
    }
}
