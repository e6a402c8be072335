use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hgtomo::diffraction::{
    far_field_with, linspace, simulate_scan_with, ScanConfig, SimulationSetup,
};
use hgtomo::hologram::Modulation;
use hgtomo::modes::{hg_field, ExperimentGeometry, HgMode};
use hgtomo::Execution;

const PATHS: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn far_field(c: &mut Criterion) {
    let geo = ExperimentGeometry::default();
    let mut group = c.benchmark_group("far_field");
    for size in [256usize, 1024] {
        let setup = SimulationSetup {
            grid_size: size,
            ..Default::default()
        };
        let grid = setup.slm_grid(&geo).unwrap();
        let w = setup.illumination_waist(&geo);
        let field = hg_field(&HgMode::new(2, 0, w).unwrap(), &grid).unwrap();
        for (name, exec) in PATHS {
            group.bench_with_input(BenchmarkId::new(name, size), &field, |b, f| {
                b.iter(|| far_field_with(black_box(f), &geo, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn scan(c: &mut Criterion) {
    let geo = ExperimentGeometry::default();
    let setup = SimulationSetup {
        grid_size: 512,
        grating_pixels: 4.0,
        ..Default::default()
    };
    let cfg = ScanConfig {
        displacements: linspace(-3.0, 3.0, 41),
        modes: (0..5).collect(),
        modulation: Modulation::PhaseOnly,
    };
    let mut group = c.benchmark_group("simulate_scan");
    group.sample_size(10);
    for (name, exec) in PATHS {
        group.bench_function(name, |b| {
            b.iter(|| simulate_scan_with(black_box(&cfg), &geo, &setup, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, far_field, scan);
criterion_main!(benches);
