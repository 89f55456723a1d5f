use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use deficiency::decouple::{certificate, DecoupleOptions};
use deficiency::partition::{build_cutoff, verify_cutoff_with, RegionSpec};
use deficiency::weyl::classify_batch;
use deficiency::{Mode, PotentialSpec, RadialProblem, SingularityConfig, Spectral, WeylOptions};

const MODES: [(&str, Mode); 2] = [("sequential", Mode::Sequential), ("parallel", Mode::Parallel)];

fn weyl_batch(c: &mut Criterion) {
    let problems: Vec<_> = (0..64)
        .map(|i| RadialProblem::inverse_square(-4.0 + 0.13 * i as f64))
        .collect();
    let opts = WeylOptions::default();
    let mut g = c.benchmark_group("classify_batch");
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &m| {
            b.iter(|| classify_batch(black_box(&problems), Spectral::PlusI, &opts, m))
        });
    }
    g.finish();
}

fn cutoff_scan(c: &mut Criterion) {
    let phi = build_cutoff(
        RegionSpec::complement_of_ball(vec![0.0; 3], 2.0),
        RegionSpec::ball(vec![0.0; 3], 1.0),
        1.0,
        3,
    )
    .unwrap();
    let mut g = c.benchmark_group("verify_cutoff");
    g.sample_size(20);
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &m| {
            b.iter(|| verify_cutoff_with(black_box(&phi), 32, m))
        });
    }
    g.finish();
}

fn certificate_sites(c: &mut Criterion) {
    let mut cfg = SingularityConfig::new(3);
    for i in 0..40 {
        cfg = cfg.with_point(
            vec![4.0 * (i % 8) as f64, 4.0 * (i / 8) as f64, 0.0],
            PotentialSpec::InverseSquarePoint {
                coupling: -2.0 + 0.25 * (i % 16) as f64,
                cutoff: 1.0,
                perturbation: None,
            },
        );
    }
    let mut g = c.benchmark_group("certificate");
    g.sample_size(10);
    for (name, mode) in MODES {
        let opts = DecoupleOptions {
            mode,
            ..DecoupleOptions::default()
        };
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, o| {
            b.iter(|| certificate(black_box(&cfg), o).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, weyl_batch, cutoff_scan, certificate_sites);
criterion_main!(benches);
