use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use formation_bench::octahedron;
use formation_core::control;
use formation_core::dynamics::{coordinate_rates, phi_rows, TetraGeometry};
use formation_core::geometry::{basis_at, frame_of, from_cartesian, phi_at, Vec3};
use formation_core::sensing::{sense, WorldState};
use formation_core::sim::{initial_state, SimConfig, Simulator};

fn points(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)))
        .collect()
}

fn geometry(c: &mut Criterion) {
    let p = points(4, 1);
    let frame = frame_of(&p[0], &p[1], &p[2]).unwrap();
    let mut g = c.benchmark_group("geometry");
    g.bench_function("from_cartesian+basis", |b| {
        b.iter(|| {
            let coords = from_cartesian(black_box(&p[3]), &frame).unwrap();
            basis_at(&coords, &frame).unwrap()
        })
    });
    g.bench_function("phi four-case", |b| {
        b.iter(|| phi_at(black_box(&p[0]), &p[1], &p[2], &p[3]).unwrap())
    });
    g.bench_function("phi rows", |b| {
        b.iter(|| phi_rows(&TetraGeometry::new(black_box(&p[0]), &p[1], &p[2], &p[3]).unwrap()).unwrap())
    });
    let v = [p[1], p[2], p[3], p[0]];
    g.bench_function("coordinate rates", |b| {
        b.iter(|| coordinate_rates(black_box(&[p[0], p[1], p[2], p[3]]), &v).unwrap())
    });
    g.finish();
}

fn controller(c: &mut Criterion) {
    let f = octahedron();
    let world = WorldState::new(points(6, 2));
    c.bench_function("control/all agents", |b| {
        b.iter(|| {
            (2..=6)
                .map(|a| control(&sense(black_box(&world), &f.graph, a).unwrap(), &f.targets, &f.gains, a).velocity)
                .sum::<Vec3>()
        })
    });
}

fn integrator(c: &mut Criterion) {
    let f = octahedron();
    let cfg = SimConfig {
        seed: 3,
        ..SimConfig::default()
    };
    let world = initial_state(6, &cfg);
    c.bench_function("rk4 step", |b| {
        b.iter_batched(
            || Simulator::new(&f, &cfg).unwrap(),
            |mut sim| sim.step(black_box(&world), cfg.dt).0,
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, geometry, controller, integrator);
criterion_main!(benches);
