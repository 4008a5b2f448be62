//! Ion-crystal model: equilibrium positions, local mode frequencies, Coulomb
//! couplings and the derived interaction rate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::consts::{AMU, KE2};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonSpecies {
    /// Atomic mass in amu.
    pub mass_amu: f64,
    /// Charge in units of the elementary charge.
    pub charge: u32,
}

impl Default for IonSpecies {
    fn default() -> Self {
        Self {
            mass_amu: 171.0,
            charge: 1,
        }
    }
}

impl IonSpecies {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass_amu > 0.0 && self.mass_amu.is_finite()) {
            return invalid(format!("ion mass must be positive, got {} amu", self.mass_amu));
        }
        if self.charge < 1 {
            return invalid("ion charge must be at least 1");
        }
        Ok(())
    }

    pub fn mass_kg(&self) -> f64 {
        self.mass_amu * AMU
    }

    /// Coulomb strength k_c (Ze)^2 / m in m^3/s^2.
    pub fn coulomb_over_mass(&self) -> f64 {
        let z = self.charge as f64;
        KE2 * z * z / self.mass_kg()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// Linear chain in a harmonic trap; frequencies in rad/s.
    Chain1D {
        n_ions: usize,
        axial_freq: f64,
        transverse_freq: f64,
    },
    /// Idealized lattice described by its spacing, coordination number and local frequency.
    UniformLattice {
        spacing: f64,
        coordination: f64,
        local_freq: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrystalConfig {
    pub species: IonSpecies,
    pub geometry: Geometry,
    /// Overrides the default n_c (2.0 for chains; the lattice carries its own).
    pub coordination: Option<f64>,
}

impl CrystalConfig {
    pub fn validate(&self) -> Result<()> {
        self.species.validate()?;
        match self.geometry {
            Geometry::Chain1D {
                n_ions,
                axial_freq,
                transverse_freq,
            } => {
                if n_ions < 1 {
                    return invalid("a chain needs at least one ion");
                }
                if !(axial_freq > 0.0) || !(transverse_freq > 0.0) {
                    return invalid("trap frequencies must be positive");
                }
            }
            Geometry::UniformLattice {
                spacing,
                coordination,
                local_freq,
            } => {
                if !(spacing > 0.0) {
                    return invalid("lattice spacing must be positive");
                }
                if !(coordination > 0.0) {
                    return invalid("coordination number must be positive");
                }
                if !(local_freq > 0.0) {
                    return invalid("local frequency must be positive");
                }
            }
        }
        if let Some(nc) = self.coordination {
            if !(nc > 0.0) {
                return invalid("coordination override must be positive");
            }
        }
        Ok(())
    }

    pub fn coordination(&self) -> f64 {
        match (self.coordination, self.geometry) {
            (Some(nc), _) => nc,
            (None, Geometry::Chain1D { .. }) => 2.0,
            (None, Geometry::UniformLattice { coordination, .. }) => coordination,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionRate {
    /// omega_I in rad/s.
    pub omega_i: f64,
    /// Phonon propagation time in s.
    pub t_p: f64,
    /// Propagation speed in m/s.
    pub v_p: f64,
}

/// Interaction rate of a neighbouring pair at distance `d` with local frequency `omega`.
pub fn interaction_rate(species: &IonSpecies, d: f64, omega: f64) -> Result<InteractionRate> {
    species.validate()?;
    if !(d > 0.0) || !(omega > 0.0) {
        return invalid("interaction rate needs positive distance and frequency");
    }
    let k = species.coulomb_over_mass();
    let t_p2 = d * d * d / k;
    Ok(InteractionRate {
        omega_i: 1.0 / (omega * t_p2),
        t_p: t_p2.sqrt(),
        v_p: (k / d).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrystalModel {
    pub species: IonSpecies,
    /// Equilibrium coordinates along the chain axis (m).
    pub positions: Vec<f64>,
    /// Local mode frequencies (rad/s).
    pub local_freqs: Vec<f64>,
    /// Coupling matrix omega^2_{mu mu'} (rad^2/s^2), zero diagonal.
    pub coupling: Vec<Vec<f64>>,
    /// Indices of the two target ions.
    pub target_pair: Option<[usize; 2]>,
    /// Rate derived for the target pair; absent for a single ion.
    pub interaction: Option<InteractionRate>,
    pub coordination: f64,
}

impl CrystalModel {
    pub fn n_ions(&self) -> usize {
        self.positions.len()
    }

    pub fn rate(&self) -> Result<InteractionRate> {
        self.interaction
            .ok_or_else(|| Error::InvalidInput("interaction rate needs at least two ions".into()))
    }

    /// Local frequency of the target pair (geometric mean of the two ions).
    pub fn pair_frequency(&self) -> Result<f64> {
        let [a, b] = self
            .target_pair
            .ok_or_else(|| Error::InvalidInput("model has no target pair".into()))?;
        Ok((self.local_freqs[a] * self.local_freqs[b]).sqrt())
    }

    pub fn pair_distance(&self) -> Result<f64> {
        let [a, b] = self
            .target_pair
            .ok_or_else(|| Error::InvalidInput("model has no target pair".into()))?;
        Ok((self.positions[b] - self.positions[a]).abs())
    }

    /// Replace omega_I by a prescribed value, rescaling all Coulomb couplings
    /// so the target-pair coupling equals omega_I * omega.
    pub fn with_interaction_rate(mut self, omega_i: f64) -> Result<Self> {
        if !(omega_i > 0.0) {
            return invalid("interaction rate override must be positive");
        }
        let [a, b] = self
            .target_pair
            .ok_or_else(|| Error::InvalidInput("interaction override needs a target pair".into()))?;
        let omega = self.pair_frequency()?;
        let scale = omega_i * omega / self.coupling[a][b];
        for row in self.coupling.iter_mut() {
            for c in row.iter_mut() {
                *c *= scale;
            }
        }
        let t_p = 1.0 / (omega_i * omega).sqrt();
        self.interaction = Some(InteractionRate {
            omega_i,
            t_p,
            v_p: self.pair_distance()? / t_p,
        });
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EquilibriumOptions {
    /// Force residual tolerance relative to k_c e^2 / d_min^2.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
        }
    }
}

fn energy(u: &[f64]) -> f64 {
    let mut e = 0.0;
    for i in 0..u.len() {
        e += 0.5 * u[i] * u[i];
        for j in i + 1..u.len() {
            e += 1.0 / (u[j] - u[i]).abs();
        }
    }
    e
}

fn gradient(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut g = u.to_vec();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let r = u[i] - u[j];
                g[i] -= r.signum() / (r * r);
            }
        }
    }
    g
}

fn min_gap(u: &[f64]) -> f64 {
    u.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn ordered(u: &[f64]) -> bool {
    u.windows(2).all(|w| w[1] > w[0])
}

/// Equilibrium of N ions in units of l = (k_c e^2 / (m omega_z^2))^{1/3}.
pub fn dimensionless_equilibrium(n: usize, opts: EquilibriumOptions) -> Result<Vec<f64>> {
    if n == 0 {
        return invalid("need at least one ion");
    }
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let spacing = 2.018 / (n as f64).powf(0.559);
    let mut u: Vec<f64> = (0..n).map(|i| spacing * (i as f64 - (n as f64 - 1.0) / 2.0)).collect();
    let residual = |u: &[f64]| {
        let g = gradient(u);
        let scale = 1.0 / (min_gap(u) * min_gap(u));
        g.iter().fold(0.0f64, |m, x| m.max(x.abs())) / scale
    };
    let mut res = residual(&u);
    for _ in 0..opts.max_iter {
        if res < opts.tol {
            break;
        }
        let g = gradient(&u);
        let mut h = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = 1.0;
            for j in 0..n {
                if i != j {
                    let c = 2.0 / (u[i] - u[j]).abs().powi(3);
                    h[(i, i)] += c;
                    h[(i, j)] = -c;
                }
            }
        }
        let rhs = -DVector::from_vec(g);
        let dx = match h.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => rhs.clone(),
        };
        let e0 = energy(&u);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = u.iter().zip(dx.iter()).map(|(a, d)| a + step * d).collect();
            if ordered(&trial) {
                let r = residual(&trial);
                if energy(&trial) < e0 || r < res {
                    u = trial;
                    res = r;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    // Mirror symmetry about the trap centre is exact; remove rounding asymmetry.
    let sym: Vec<f64> = (0..n).map(|i| 0.5 * (u[i] - u[n - 1 - i])).collect();
    let r_sym = residual(&sym);
    let (u, res) = if r_sym <= res.max(opts.tol) {
        (sym, r_sym)
    } else {
        (u, res)
    };
    if res < opts.tol {
        Ok(u)
    } else {
        Err(Error::NonConvergence {
            what: "equilibrium Newton iteration",
            iterations: opts.max_iter,
            residual: res,
        })
    }
}

/// Equilibrium positions (m) for a chain configuration.
pub fn equilibrium_positions(config: &CrystalConfig) -> Result<Vec<f64>> {
    equilibrium_positions_with(config, EquilibriumOptions::default())
}

pub fn equilibrium_positions_with(config: &CrystalConfig, opts: EquilibriumOptions) -> Result<Vec<f64>> {
    config.validate()?;
    match config.geometry {
        Geometry::Chain1D { n_ions, axial_freq, .. } => {
            let l = (config.species.coulomb_over_mass() / (axial_freq * axial_freq)).cbrt();
            Ok(dimensionless_equilibrium(n_ions, opts)?
                .into_iter()
                .map(|u| u * l)
                .collect())
        }
        Geometry::UniformLattice { .. } => invalid("equilibrium positions are only solved for chains"),
    }
}

/// Local transverse frequencies with all other ions held fixed.
pub fn local_frequencies(species: &IonSpecies, positions: &[f64], transverse_freq: f64) -> Result<Vec<f64>> {
    let k = species.coulomb_over_mass();
    let mut out = Vec::with_capacity(positions.len());
    for (i, xi) in positions.iter().enumerate() {
        let mut w2 = transverse_freq * transverse_freq;
        for (j, xj) in positions.iter().enumerate() {
            if i != j {
                let r = (xi - xj).abs();
                if r == 0.0 {
                    return invalid(format!("ions {i} and {j} coincide"));
                }
                w2 -= k / (r * r * r);
            }
        }
        if !(w2 > 0.0) {
            return Err(Error::Unstable { ion: i, omega_sq: w2 });
        }
        out.push(w2.sqrt());
    }
    Ok(out)
}

/// Transverse coupling omega^2_{mu mu'} = k_c e^2 / (m |x_mu - x_mu'|^3).
pub fn coupling_matrix(species: &IonSpecies, positions: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = positions.len();
    let k = species.coulomb_over_mass();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let r = (positions[i] - positions[j]).abs();
            if r == 0.0 {
                return invalid(format!("ions {i} and {j} coincide"));
            }
            let v = k / (r * r * r);
            c[i][j] = v;
            c[j][i] = v;
        }
    }
    Ok(c)
}

/// Number of sites used to represent a uniform lattice: the target pair plus one neighbour.
pub const LATTICE_SITES: usize = 3;

pub fn build_model(config: &CrystalConfig) -> Result<CrystalModel> {
    config.validate()?;
    let species = config.species;
    let (positions, local_freqs) = match config.geometry {
        Geometry::Chain1D { transverse_freq, .. } => {
            let x = equilibrium_positions(config)?;
            let w = local_frequencies(&species, &x, transverse_freq)?;
            (x, w)
        }
        Geometry::UniformLattice {
            spacing, local_freq, ..
        } => (
            (0..LATTICE_SITES).map(|i| i as f64 * spacing).collect(),
            vec![local_freq; LATTICE_SITES],
        ),
    };
    let coupling = coupling_matrix(&species, &positions)?;
    let n = positions.len();
    let target_pair = (n >= 2).then(|| {
        let a = match config.geometry {
            Geometry::Chain1D { .. } => (n - 1) / 2,
            Geometry::UniformLattice { .. } => 0,
        };
        [a, a + 1]
    });
    let interaction = match target_pair {
        Some([a, b]) => Some(interaction_rate(
            &species,
            (positions[b] - positions[a]).abs(),
            (local_freqs[a] * local_freqs[b]).sqrt(),
        )?),
        None => None,
    };
    Ok(CrystalModel {
        species,
        positions,
        local_freqs,
        coupling,
        target_pair,
        interaction,
        coordination: config.coordination(),
    })
}
