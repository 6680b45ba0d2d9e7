use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::DMatrix;
use std::hint::black_box;

use phonocomb::calibration::{planck_fit, planck_power};
use phonocomb::coupling::{build_idealized_coupling_matrix, default_tolerance, match_four_wave};
use phonocomb::entanglement::test_all_bipartitions;
use phonocomb::gaussian::{output_covariance, sample, thermal_covariance};
use phonocomb::reconstruct::reconstruct_physical;
use phonocomb::scattering::scattering_matrices;
use phonocomb::units::hz_to_rad;
use phonocomb::{CovarianceMatrix, ModeSpec, PumpTone, QuadratureScattering};

const F0: f64 = 3.85e9;
const FSR: f64 = 2.3e6;

/// Four probes on every other comb line, pumped halfway between neighbours.
fn ring() -> (Vec<ModeSpec>, Vec<PumpTone>) {
    let modes = [0, 2, 4, 6].iter().map(|&k| ModeSpec::from_hz(k, F0 + FSR * k as f64, 20e3, 20e3).unwrap()).collect();
    let pumps = [1, 3, 5, 7].iter().map(|&k| PumpTone::from_hz(F0 + FSR * k as f64, 0.0, 0.0).unwrap()).collect();
    (modes, pumps)
}

fn ring_scattering(modes: &[ModeSpec], pumps: &[PumpTone]) -> QuadratureScattering {
    let matches = match_four_wave(modes, pumps, default_tolerance(modes)).unwrap();
    let cm = build_idealized_coupling_matrix(modes, pumps, &[hz_to_rad(8e3); 4], &[0.0; 4], &matches).unwrap();
    let ge: Vec<f64> = modes.iter().map(|m| m.gamma_ext).collect();
    let gi: Vec<f64> = modes.iter().map(|m| m.gamma_int).collect();
    scattering_matrices(&cm, &ge, &gi).unwrap().to_quadrature_basis().unwrap()
}

fn ring_state() -> CovarianceMatrix {
    let (modes, pumps) = ring();
    let sc = ring_scattering(&modes, &pumps);
    let vin = thermal_covariance(&modes, 0.03).unwrap();
    output_covariance(&sc, &vin, &vin).unwrap()
}

fn bench_scattering(c: &mut Criterion) {
    let (modes, pumps) = ring();
    c.bench_function("ring scattering", |b| b.iter(|| ring_scattering(black_box(&modes), black_box(&pumps))));
}

fn bench_sampling(c: &mut Criterion) {
    let v = ring_state();
    c.bench_function("sample 1e5 x 8 quadratures", |b| b.iter(|| sample(black_box(&v), 100_000, 1).unwrap()));
    let s = sample(&v, 100_000, 1).unwrap();
    c.bench_function("covariance and sem 1e5", |b| b.iter(|| (s.covariance().unwrap(), s.covariance_sem().unwrap())));
}

fn bench_reconstruct(c: &mut Criterion) {
    let v = ring_state();
    // push the state below the uncertainty bound so the solver has work to do
    let shrunk = CovarianceMatrix::from_symmetrized(v.matrix() * 0.9).unwrap();
    let sigma = DMatrix::from_element(8, 8, 0.01);
    c.bench_function("reconstruct 4 modes", |b| {
        b.iter_batched(|| shrunk.clone(), |m| reconstruct_physical(&m, &sigma, 1e-9).unwrap(), BatchSize::SmallInput)
    });
}

fn bench_bipartitions(c: &mut Criterion) {
    let v = ring_state();
    let sigma = DMatrix::from_element(8, 8, 0.01);
    c.bench_function("all 7 bipartitions", |b| b.iter(|| test_all_bipartitions(black_box(&v), Some(&sigma)).unwrap()));
}

fn bench_planck(c: &mut Criterion) {
    let temps: Vec<f64> = (0..20).map(|i| 0.02 + 0.08 * i as f64).collect();
    let powers: Vec<f64> = temps.iter().map(|&t| planck_power(t, F0, 1e8, 0.08)).collect();
    c.bench_function("planck fit 20 points", |b| b.iter(|| planck_fit(black_box(&temps), black_box(&powers), F0).unwrap()));
}

criterion_group!(benches, bench_scattering, bench_sampling, bench_reconstruct, bench_bipartitions, bench_planck);
criterion_main!(benches);
