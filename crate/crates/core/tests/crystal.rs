use approx::assert_relative_eq;
use proptest::prelude::*;

use lpgate::consts::{angular, ordinary, AMU, KE2};
use lpgate::crystal::{
    build_model, dimensionless_equilibrium, interaction_rate, CrystalConfig, EquilibriumOptions, Geometry, IonSpecies,
};

fn chain(n: usize, axial: f64, transverse: f64) -> CrystalConfig {
    CrystalConfig {
        species: IonSpecies::default(),
        geometry: Geometry::Chain1D {
            n_ions: n,
            axial_freq: angular(axial),
            transverse_freq: angular(transverse),
        },
        coordination: None,
    }
}

/// Trap plus Coulomb energy of ions at (x_i, y_i), written out directly.
fn potential(m: f64, wz: f64, wt: f64, x: &[f64], y: &[f64]) -> f64 {
    let mut e = 0.0;
    for i in 0..x.len() {
        e += 0.5 * m * (wz * wz * x[i] * x[i] + wt * wt * y[i] * y[i]);
        for j in i + 1..x.len() {
            e += KE2 / ((x[i] - x[j]).powi(2) + (y[i] - y[j]).powi(2)).sqrt();
        }
    }
    e
}

/// Central-difference second derivative of the energy in the transverse coordinates.
fn transverse_hessian(m: f64, wz: f64, wt: f64, x: &[f64], i: usize, j: usize, h: f64) -> f64 {
    let n = x.len();
    let at = |di: f64, dj: f64| {
        let mut y = vec![0.0; n];
        y[i] += di;
        y[j] += dj;
        potential(m, wz, wt, x, &y)
    };
    if i == j {
        (at(h, 0.0) - 2.0 * at(0.0, 0.0) + at(-h, 0.0)) / (h * h)
    } else {
        (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h)
    }
}

#[test]
fn tabulated_equilibria() {
    let o = EquilibriumOptions::default();
    let two = dimensionless_equilibrium(2, o).unwrap();
    assert_relative_eq!(two[1] - two[0], 2f64.cbrt(), max_relative = 1e-12);
    let three = dimensionless_equilibrium(3, o).unwrap();
    assert_relative_eq!(three[2], 1.25f64.cbrt(), max_relative = 1e-12);
    assert!(three[1].abs() < 1e-12);
    let four = dimensionless_equilibrium(4, o).unwrap();
    assert_relative_eq!(four[2], 0.4544, max_relative = 1e-3);
    assert_relative_eq!(four[3], 1.4359, max_relative = 1e-3);
    let five = dimensionless_equilibrium(5, o).unwrap();
    assert_relative_eq!(five[3], 0.8221, max_relative = 1e-3);
    assert_relative_eq!(five[4], 1.7429, max_relative = 1e-3);
}

#[test]
fn interaction_rate_follows_inverse_cube() {
    let s = IonSpecies::default();
    let w = angular(3e6);
    let r1 = interaction_rate(&s, 8.8e-6, w).unwrap();
    let r2 = interaction_rate(&s, 17.6e-6, w).unwrap();
    assert_relative_eq!(r1.omega_i / r2.omega_i, 8.0, max_relative = 1e-12);
    let direct = KE2 / (171.0 * AMU * 8.8e-6f64.powi(3) * w);
    assert_relative_eq!(r1.omega_i, direct, max_relative = 1e-12);
    assert_relative_eq!(r1.omega_i, 1.0 / (w * r1.t_p * r1.t_p), max_relative = 1e-12);
    assert_relative_eq!(r1.v_p, 8.8e-6 / r1.t_p, max_relative = 1e-12);
    assert_relative_eq!(ordinary(r1.omega_i), 10e3, max_relative = 0.02);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn chain_equilibrium_balances_forces(n in 1usize..=10, axial in 0.2e6..2e6f64) {
        let cfg = chain(n, axial, 20.0 * axial);
        let model = build_model(&cfg).unwrap();
        let x = &model.positions;
        let m = 171.0 * AMU;
        let wz = angular(axial);
        let scale = if n > 1 {
            let dmin = x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            KE2 / (dmin * dmin)
        } else {
            m * wz * wz * 1e-6
        };
        for i in 0..n {
            let mut f = -m * wz * wz * x[i];
            for j in 0..n {
                if i != j {
                    let r = x[i] - x[j];
                    f += KE2 * r.signum() / (r * r);
                }
            }
            prop_assert!(f.abs() <= 1e-9 * scale, "ion {i}: residual {f:e}");
        }
        for i in 0..n {
            prop_assert!((x[i] + x[n - 1 - i]).abs() <= 1e-12 * x[n - 1].abs().max(1e-9));
        }
        prop_assert!(x.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn chain_frequencies_and_couplings_match_finite_differences(n in 2usize..=10, axial in 0.2e6..2e6f64) {
        let transverse = 20.0 * axial;
        let model = build_model(&chain(n, axial, transverse)).unwrap();
        let x = &model.positions;
        let m = 171.0 * AMU;
        let (wz, wt) = (angular(axial), angular(transverse));
        let h = 1e-3 * x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        for i in 0..n {
            let w2 = transverse_hessian(m, wz, wt, x, i, i, h) / m;
            prop_assert!((model.local_freqs[i].powi(2) - w2).abs() <= 1e-5 * w2);
            for j in 0..n {
                if i == j {
                    prop_assert_eq!(model.coupling[i][j], 0.0);
                    continue;
                }
                let c = transverse_hessian(m, wz, wt, x, i, j, h).abs() / m;
                prop_assert!((model.coupling[i][j] - c).abs() <= 1e-4 * c, "({i},{j}) {} vs {c}", model.coupling[i][j]);
                prop_assert_eq!(model.coupling[i][j], model.coupling[j][i]);
            }
        }
        // Mirror symmetry of the chain carries over to the frequencies.
        for i in 0..n {
            prop_assert!((model.local_freqs[i] - model.local_freqs[n - 1 - i]).abs() <= 1e-9 * model.local_freqs[i]);
        }
        let [a, b] = model.target_pair.unwrap();
        prop_assert_eq!(b, a + 1);
        prop_assert!(a == (n - 1) / 2);
    }

    #[test]
    fn rate_override_is_exact(spacing in 2e-6..50e-6f64, fraction in 1e-4..0.1f64) {
        let cfg = CrystalConfig {
            species: IonSpecies::default(),
            geometry: Geometry::UniformLattice { spacing, coordination: 5.6, local_freq: angular(1e6) },
            coordination: None,
        };
        let base = build_model(&cfg).unwrap();
        let w = angular(1e6);
        let model = base.clone().with_interaction_rate(fraction * w).unwrap();
        prop_assert!((model.rate().unwrap().omega_i - fraction * w).abs() <= 1e-12 * fraction * w);
        prop_assert!((model.coupling[0][1] - fraction * w * w).abs() <= 1e-12 * fraction * w * w);
        // Ratios between couplings are preserved.
        let r0 = base.coupling[0][2] / base.coupling[0][1];
        let r1 = model.coupling[0][2] / model.coupling[0][1];
        prop_assert!((r0 - r1).abs() <= 1e-12);
    }
}
