use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use forwarder_bench::{cruise, started_env};
use forwarder_core::env::{gentle_perlin, TERRAIN_RESOLUTION, TERRAIN_SIZE};
use forwarder_core::heightfield::{generate_perlin, local_height_map};

fn terrain(c: &mut Criterion) {
    c.bench_function("perlin 257x257", |b| {
        b.iter(|| generate_perlin(3, &gentle_perlin(), TERRAIN_SIZE, TERRAIN_RESOLUTION).unwrap())
    });
    let hf = generate_perlin(3, &gentle_perlin(), TERRAIN_SIZE, TERRAIN_RESOLUTION).unwrap();
    c.bench_function("local height map", |b| b.iter(|| local_height_map(&hf, (1.0, -2.0, 0.4), 0.3)));
}

fn stepping(c: &mut Criterion) {
    let action = cruise();
    // One control step is five physics steps plus observation and reward.
    c.bench_function("env control step", |b| {
        b.iter_batched_ref(
            || started_env(5),
            |env| {
                let out = env.step(&action).unwrap();
                if out.done {
                    env.reset().unwrap();
                }
            },
            BatchSize::LargeInput,
        )
    });
    c.bench_function("env reset", |b| {
        let mut env = started_env(6);
        b.iter(|| env.reset().unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = terrain, stepping
}
criterion_main!(benches);
