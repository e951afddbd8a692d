use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use qst_core::sector::{FidelityKernel, SenderEvolution};
use qst_core::*;

fn spectral(spec: &ChainSpec) -> SpectralData {
    diagonalize(&build_single_particle(spec).unwrap()).unwrap()
}

fn spectrum(c: &mut Criterion) {
    let m = build_single_particle(&ChainSpec::new(46, 100.0).unwrap()).unwrap();
    c.bench_function("diagonalize N=46", |b| {
        b.iter(|| diagonalize(black_box(&m)).unwrap())
    });
    let m = build_single_particle(&ChainSpec::new(400, 100.0).unwrap()).unwrap();
    c.bench_function("diagonalize N=400", |b| {
        b.iter(|| diagonalize(black_box(&m)).unwrap())
    });
}

fn amplitudes(c: &mut Criterion) {
    let spec = ChainSpec::new(46, 100.0).unwrap();
    let sd = spectral(&spec);
    c.bench_function("propagator N=46", |b| {
        b.iter(|| propagator(black_box(&sd), black_box(15727.4)))
    });
    let mut g = c.benchmark_group("average fidelity");
    g.sample_size(20);
    g.bench_function("grid of 200, N=46", |b| {
        b.iter(|| {
            (0..200)
                .map(|i| {
                    average_fidelity_exact(&spec, 80.0 * i as f64)
                        .unwrap()
                        .value
                })
                .sum::<f64>()
        })
    });
    g.finish();
}

fn search(c: &mut Criterion) {
    let mut g = c.benchmark_group("transfer time");
    g.sample_size(10);
    for (n, h) in [(30, 60.0), (46, 100.0), (32, 100.0)] {
        let spec = ChainSpec::new(n, h).unwrap();
        g.bench_function(format!("N={n} h={h}"), |b| {
            b.iter(|| find_transfer_time(black_box(&spec)).unwrap())
        });
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let spec = ChainSpec::new(46, 100.0).unwrap();
    let t = 15727.4;
    let kernel = FidelityKernel::new(
        &spec,
        &SenderEvolution::from_amplitudes(&spec, &propagator(&spectral(&spec), t)),
    );
    let psi = [Complex64::new(0.5, 0.0); 4];
    c.bench_function("kernel fidelity", |b| {
        b.iter(|| kernel.fidelity(black_box(&psi)))
    });
    let mut g = c.benchmark_group("monte carlo");
    g.sample_size(10);
    g.bench_function("10^4 states, N=46", |b| {
        b.iter(|| haar_average_mc(&spec, t, 10_000, 7).unwrap())
    });
    g.finish();
}

criterion_group!(benches, spectrum, amplitudes, search, monte_carlo);
criterion_main!(benches);
