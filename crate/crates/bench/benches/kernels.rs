//! Benchmarks for the hot paths: spectrum quadrature, the adaptive loop,
//! Bell evaluation, hologram encoding, and the diffraction oracle.
//!
//! Run with `cargo bench -p oamlab-bench`; under `cargo test` each bench
//! executes once as a smoke test.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use oamlab::linalg::C64;
use oamlab::{
    cglmp_bases, diffraction_oracle, encode_mask, i3_value, joint_amplitude, projector_counts,
    reconstruct_with_options, run_optimization, superposition_field, FitOptions, MaskConfig,
    PumpProfile, QuantumState, SpectrumLab, SpsaConfig, StateVector,
};
use oamlab_bench::{qutrit_pump, qutrit_subspace, standard_setup};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bench_joint_amplitude(c: &mut Criterion) {
    let (crystal, detection, waist) = standard_setup();
    let pump = qutrit_pump(waist);
    c.bench_function("joint_amplitude_13x13", |b| {
        b.iter(|| joint_amplitude(black_box(&pump), &crystal, &detection).unwrap())
    });
}

fn bench_spsa(c: &mut Criterion) {
    let (crystal, detection, waist) = standard_setup();
    let subspace = qutrit_subspace();
    let lab = SpectrumLab::new(waist, &crystal, &detection, &subspace).unwrap();
    let initial = PumpProfile::from_components(
        waist,
        &[
            (-2, C64::new(0.1, 0.0)),
            (0, C64::new(0.99, 0.0)),
            (2, C64::new(0.1, 0.0)),
        ],
    )
    .unwrap();
    let config = SpsaConfig {
        seed: 7,
        ..SpsaConfig::default()
    };
    let mut group = c.benchmark_group("spsa");
    group.sample_size(20);
    group.bench_function("run_30_iterations_exact", |b| {
        b.iter(|| run_optimization(black_box(&initial), &lab, &config).unwrap())
    });
    group.finish();
}

fn bench_bell(c: &mut Criterion) {
    let state = QuantumState::Pure(StateVector::max_entangled_qutrit(0.0, 0.0));
    let settings = cglmp_bases(0.0, 0.0);
    c.bench_function("i3_value_qutrit", |b| {
        b.iter(|| i3_value(black_box(&state), &settings).unwrap())
    });
}

fn bench_holograms(c: &mut Criterion) {
    let cfg = MaskConfig::new(512, 512, 8.0e-6, 64.0e-6, None).unwrap();
    let coefficients = [
        (-2, C64::new(0.76, -0.11)),
        (0, C64::new(-0.12, 0.15)),
        (2, C64::new(0.30, -0.53)),
    ];
    let target = superposition_field(&coefficients, 0.5e-3, &cfg).unwrap();
    let mask = encode_mask(&target, &cfg).unwrap();

    let mut group = c.benchmark_group("holograms_512");
    group.sample_size(20);
    group.bench_function("encode_mask", |b| {
        b.iter(|| encode_mask(black_box(&target), &cfg).unwrap())
    });
    group.bench_function("diffraction_oracle", |b| {
        b.iter(|| diffraction_oracle(black_box(&mask), None, &cfg).unwrap())
    });
    group.finish();
}

fn bench_tomography(c: &mut Criterion) {
    let state = QuantumState::Pure(StateVector::max_entangled_qutrit(0.3, -0.7));
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let counts = projector_counts(&state, 1.0e6, &mut rng).unwrap();
    let options = FitOptions {
        n_starts: 1,
        ..FitOptions::default()
    };
    let mut group = c.benchmark_group("tomography");
    group.sample_size(10);
    group.bench_function("reconstruct_single_start", |b| {
        b.iter(|| {
            let mut fit_rng = ChaCha8Rng::seed_from_u64(1);
            reconstruct_with_options(black_box(&counts), &options, &mut fit_rng).unwrap()
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_joint_amplitude,
    bench_spsa,
    bench_bell,
    bench_holograms,
    bench_tomography
);
criterion_main!(benches);
