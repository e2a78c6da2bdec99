//! Hot kernels: geodesic integration, fiber quadrature, truncated volumes and
//! the monotone form.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use divflow::flow::{integrate_geodesic, path_integral_identity, FlowTolerances};
use divflow::measure::{
    base_integral, fiber_identity, FiberRule, Method, QuadratureOptions, Region,
};
use divflow::potential::{monotone_form, PhiProfile};
use divflow::zoo::{self, ZooParams};
use divflow::UnitTangentState;

fn state(id: &str, p: Vec<f64>) -> (zoo::ZooManifold, UnitTangentState) {
    let zm = zoo::manifold(id, &ZooParams::default()).unwrap();
    let c: Vec<f64> = (0..zm.manifold.dim())
        .map(|i| {
            if i == 0 {
                0.6
            } else {
                0.8 / (zm.manifold.dim() - 1) as f64
            }
        })
        .collect();
    let n = c.iter().map(|a| a * a).sum::<f64>().sqrt();
    let c: Vec<f64> = c.iter().map(|a| a / n).collect();
    let s = UnitTangentState::from_frame(&zm.manifold, 0, p, &c).unwrap();
    (zm, s)
}

fn geodesics(c: &mut Criterion) {
    let mut g = c.benchmark_group("geodesic");
    for (id, p) in [
        ("hyperbolic", vec![0.3, -0.2]),
        ("revolution:1/(1+x^2)", vec![0.5, 1.0]),
        ("warp:ex4", vec![0.3, -0.2, 1.0]),
    ] {
        let (zm, s) = state(id, p);
        g.bench_function(format!("{id} T=10"), |b| {
            b.iter(|| {
                integrate_geodesic(&zm.manifold, black_box(&s), 10.0, FlowTolerances::default())
                    .unwrap()
            })
        });
    }
    let (zm, s) = state("warp:ex4", vec![0.3, -0.2, 1.0]);
    let z = zm.field("Z").unwrap();
    g.bench_function("ex4 path identity T=10", |b| {
        b.iter(|| {
            path_integral_identity(
                &zm.manifold,
                &z,
                black_box(&s),
                10.0,
                FlowTolerances::default(),
                1e-10,
            )
            .unwrap()
        })
    });
    g.finish();
}

fn fibers(c: &mut Criterion) {
    let mut g = c.benchmark_group("fiber identity");
    for (id, field, p) in [
        ("revolution:1/(1+x^2)", "W", vec![0.5, 1.0]),
        ("warp:ex4", "Z", vec![0.3, -0.2, 1.0]),
    ] {
        let zm = zoo::manifold(id, &ZooParams::default()).unwrap();
        let x = zm.field(field).unwrap();
        let rule = FiberRule::standard(zm.manifold.dim()).unwrap();
        g.bench_function(format!("{id}/{field}"), |b| {
            b.iter(|| fiber_identity(&zm.manifold, &x, black_box(&p), &rule).unwrap())
        });
    }
    g.finish();
}

fn volumes(c: &mut Criterion) {
    let zm = zoo::manifold("warp:ex4", &ZooParams::default()).unwrap();
    let method = Method::Quadrature(QuadratureOptions::default());
    let region = Region::Whole { r0: 1.0, levels: 4 };
    let mut g = c.benchmark_group("volume");
    g.sample_size(10);
    g.bench_function("ex4 ladder R=1..16", |b| {
        b.iter(|| {
            base_integral(
                &zm.manifold,
                &|_: &[f64]| Ok(1.0),
                black_box(&region),
                &method,
            )
            .unwrap()
        })
    });
    g.finish();
}

fn monotone(c: &mut Criterion) {
    let pairs: Vec<([f64; 3], [f64; 3])> = (0..1000)
        .map(|i| {
            let t = i as f64 * 0.37;
            (
                [t.sin(), t.cos(), 0.5 * t.sin()],
                [(2.0 * t).cos(), 0.3, -t.sin()],
            )
        })
        .collect();
    let mut g = c.benchmark_group("monotone form x1000");
    for phi in PhiProfile::shipped() {
        g.bench_function(phi.name(), |b| {
            b.iter(|| {
                pairs
                    .iter()
                    .map(|(x, y)| monotone_form(&phi, black_box(x), y))
                    .sum::<f64>()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, geodesics, fibers, volumes, monotone);
criterion_main!(benches);
