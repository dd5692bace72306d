//! Sequential against data-parallel execution of the hot loops.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hullscope_core::discs::all_crossings;
use hullscope_core::pipeline::{hull_feature_report, pair_disc, random_scene, AnalysisOptions, FamilyParams};
use hullscope_core::preseam::{trace_preseam, PairDescriptor, TracePolicy};
use hullscope_core::{models::ModelFunction, Exec, Vec3};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn trace(c: &mut Criterion) {
    let m0 = ModelFunction::ellipsoid_default([1.2, 0.8, 1.0]).unwrap();
    let m1 = ModelFunction::ellipsoid_default([0.7, 1.1, 0.9]).unwrap();
    let axis = Vec3::new(1.0, 0.3, -0.2).normalize();
    let desc = PairDescriptor::new(m0, m1, axis, 0.8, Vec3::z().cross(&axis).normalize()).unwrap();
    let mut group = c.benchmark_group("trace_preseam");
    for (name, exec) in POLICIES {
        let policy = TracePolicy { initial: 256, ..TracePolicy::default() }.with_exec(exec);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| trace_preseam(black_box(&desc), &policy).unwrap())
        });
    }
    group.finish();
}

fn crossings(c: &mut Criterion) {
    let scene = random_scene(27, &FamilyParams::ellipsoids(), 7);
    let policy = TracePolicy::default();
    let discs: Vec<_> = (1..scene.len()).map(|j| pair_disc(&scene, 0, j, &policy).unwrap()).collect();
    let mut group = c.benchmark_group("all_crossings");
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| all_crossings(black_box(&discs), exec).unwrap())
        });
    }
    group.finish();
}

fn report(c: &mut Criterion) {
    let scene = random_scene(8, &FamilyParams::ellipsoids(), 11);
    let mut group = c.benchmark_group("hull_feature_report");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    for (name, exec) in POLICIES {
        let options = AnalysisOptions { seed: 11, ..AnalysisOptions::default() }.with_exec(exec);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| hull_feature_report(black_box(&scene), &options).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, trace, crossings, report);
criterion_main!(benches);
