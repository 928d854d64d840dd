use criterion::{black_box, criterion_group, criterion_main, Criterion};

use drcons::numcore::proj_weighted_ball;
use drcons::ocoam::DEFAULT_KAPPA_GRID;
use drcons_bench::{plant, projection_fixture, semi_ons_fixture};

fn semi_ons_step(c: &mut Criterion) {
    for (m, h) in [(4, 8), (10, 16)] {
        let (state, loss, ctx, g) = semi_ons_fixture(m, h);
        c.bench_function(&format!("semi_ons_step m={m} h={h}"), |b| {
            b.iter_batched(|| state.clone(), |mut s| s.step(&loss, black_box(&ctx), &g).unwrap(), criterion::BatchSize::SmallInput)
        });
    }
}

fn projection(c: &mut Criterion) {
    for d in [8, 32] {
        let (l, z) = projection_fixture(d);
        c.bench_function(&format!("proj_weighted_ball d={d}"), |b| b.iter(|| proj_weighted_ball(&l, black_box(&z), 1.0).unwrap()));
    }
}

fn kappa(c: &mut Criterion) {
    let g = plant(4).nominal_markov(64).unwrap();
    c.bench_function("kappa_lower_bound h=64 grid=512", |b| b.iter(|| black_box(&g).kappa_lower_bound(DEFAULT_KAPPA_GRID).unwrap()));
}

criterion_group!(benches, semi_ons_step, projection, kappa);
criterion_main!(benches);
