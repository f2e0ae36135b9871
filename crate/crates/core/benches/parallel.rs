//! Sequential vs rayon execution for the data-parallel hot spots, plus the
//! sliding-DFT delay search against per-candidate FFTs.
//!
//! Build without default features to compare against a rayon-free binary:
//! `cargo bench --no-default-features` runs only the sequential arms.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use beamswitch::channel::{PathModel, Reflector, Scene};
use beamswitch::experiments::{run_imaging, ImagingConfig};
use beamswitch::optimizer::{build_codebook, OptimizerConfig, UserLink};
use beamswitch::sensing::{estimate_symbol, solve_opt_delay, solve_opt_delay_recompute, DelaySearchConfig};
use beamswitch::waveform::{generate_slot, Modulation, Numerology, PredistortionPlan, SubSymbolSchedule};
use beamswitch::{ArrayGeometry, Direction, Execution};

fn modes() -> Vec<(&'static str, Execution)> {
    let mut m = vec![("sequential", Execution::Sequential)];
    if cfg!(feature = "parallel") {
        m.push(("parallel", Execution::Parallel));
    }
    m
}

fn codebook(c: &mut Criterion) {
    let geom = ArrayGeometry::ula(16).unwrap();
    let users: Vec<UserLink> = [-30.0, -10.0, 10.0, 30.0]
        .iter()
        .map(|&a| UserLink::new(Direction::from_degrees(a, None), 1.0))
        .collect();
    let sweep: Vec<Direction> = (0..34).map(|m| Direction::from_degrees(m as f64 - 16.5, None)).collect();
    let cfg = OptimizerConfig { max_iters: 300, restarts: 1, ..Default::default() };
    let mut g = c.benchmark_group("codebook_build_34");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_function(name, |b| {
            b.iter(|| build_codebook(black_box(&users), &sweep, 1.0, &geom, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

fn imaging(c: &mut Criterion) {
    let geom = ArrayGeometry::planar(8, 8).unwrap();
    let mut scene = Scene::new(1e-2);
    scene.reflectors.push(Reflector {
        direction: Direction::from_degrees(-4.0, Some(2.0)),
        path: PathModel::new(1.0, 0.0, 3).unwrap(),
        label: String::new(),
    });
    let grid: Vec<f64> = (-4..=4).map(|d| 2.0 * d as f64).collect();
    let cfg = ImagingConfig { az_angles_deg: grid.clone(), el_angles_deg: grid, ..Default::default() };
    let mut g = c.benchmark_group("imaging_9x9");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_function(name, |b| b.iter(|| run_imaging(black_box(&scene), &geom, &cfg, 1, exec).unwrap()));
    }
    g.finish();
}

fn sub_symbols(c: &mut Criterion) {
    let num = Numerology::default();
    let slot = generate_slot(&num, Modulation::Qpsk, 3).unwrap();
    let s = num.dmrs_symbols()[0];
    let tx = slot.body(s);
    let rx = &slot.samples[num.body_start(s)..];
    let sched = SubSymbolSchedule::new(num.fft_size, 34).unwrap();
    let plan = PredistortionPlan::identity(34);
    let dc = DelaySearchConfig::default();
    let mut g = c.benchmark_group("estimate_symbol_34");
    for (name, exec) in modes() {
        g.bench_function(name, |b| b.iter(|| estimate_symbol(black_box(rx), tx, &sched, &plan, &dc, exec).unwrap()));
    }
    g.finish();
}

fn delay_search(c: &mut Criterion) {
    let num = Numerology::default();
    let slot = generate_slot(&num, Modulation::Qpsk, 5).unwrap();
    let s = num.dmrs_symbols()[0];
    let tx = slot.body(s);
    let rx = &slot.samples[num.body_start(s) - 3..];
    let mut g = c.benchmark_group("delay_search");
    for beams in [8usize, 34, 64] {
        let sched = SubSymbolSchedule::new(num.fft_size, beams).unwrap();
        let plan = PredistortionPlan::identity(beams);
        let dc = DelaySearchConfig { num_candidates: 10, ..Default::default() };
        let len = sched.sub_len();
        g.bench_with_input(BenchmarkId::new("sliding", len), &len, |b, _| {
            b.iter(|| solve_opt_delay(black_box(rx), tx, &sched, 1, &plan, &dc).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("recompute", len), &len, |b, _| {
            b.iter(|| solve_opt_delay_recompute(black_box(rx), tx, &sched, 1, &plan, &dc).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, codebook, imaging, sub_symbols, delay_search);
criterion_main!(benches);
