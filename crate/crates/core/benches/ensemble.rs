use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use lpgate::consts::TWO_PI;
use lpgate::crystal::{build_model, CrystalConfig, Geometry, IonSpecies};
use lpgate::fidelity::sim::{SimConfig, SimModel};
use lpgate::fidelity::thermal_sweep;
use lpgate::par::Exec;
use lpgate::sequence::{
    calibrate_cpf, compose_sequence, sequence_phase, CalibrationOptions, CalibrationSpec, Constraint, GateDesign,
    ProfileMode, SequenceSpec,
};
use lpgate::trajectory::TrajectoryOptions;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn desk() -> (SimModel, GateDesign) {
    let cfg = CrystalConfig {
        species: IonSpecies::default(),
        geometry: Geometry::UniformLattice {
            spacing: 1e-6,
            coordination: 2.0,
            local_freq: TWO_PI,
        },
        coordination: None,
    };
    let model = build_model(&cfg).unwrap().with_interaction_rate(0.05 * TWO_PI).unwrap();
    let spec = CalibrationSpec {
        mode: ProfileMode::Designed { segments_per_half: 2 },
        ..CalibrationSpec::new(0.02, TWO_PI, Constraint::FixedTau { tau: 1.0 })
    };
    let design = calibrate_cpf(
        &model,
        &spec,
        &compose_sequence(3).unwrap(),
        &CalibrationOptions::default(),
    )
    .unwrap();
    (SimModel::from_crystal(&model, 2, true).unwrap(), design)
}

/// Thermal ensemble of the exact simulation: one task per Fock configuration.
fn ensemble(c: &mut Criterion) {
    let (model, design) = desk();
    let mut group = c.benchmark_group("thermal_ensemble");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    for (name, exec) in MODES {
        let sim = SimConfig {
            fock_cutoff: 8,
            check_convergence: false,
            track_return: false,
            exec,
            ..SimConfig::default()
        };
        group.bench_function(BenchmarkId::new(name, "nbar=0.1"), |b| {
            b.iter(|| thermal_sweep(&model, &design, &sim, &[0.1], 0.99).unwrap())
        });
    }
    group.finish();
}

/// Conditional phase of a two-block sequence: one task per distinct interval offset.
fn sequence(c: &mut Criterion) {
    let (_, design) = desk();
    let seq = SequenceSpec::two_phi8();
    let mut group = c.benchmark_group("sequence_phase");
    for (name, exec) in MODES {
        let opts = TrajectoryOptions {
            exec,
            ..TrajectoryOptions::default()
        };
        group.bench_function(name, |b| {
            b.iter(|| sequence_phase(&design.profile, &design.drive, design.omega_i, &seq, &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ensemble, sequence);
criterion_main!(benches);
