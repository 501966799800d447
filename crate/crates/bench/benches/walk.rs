use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rwre_core::walk::{mc_slab_estimate, run_slab};
use rwre_core::{Environment, EnvironmentLaw, Sampling};

fn walks(c: &mut Criterion) {
    let law = EnvironmentLaw::dirichlet_floor(2, 0.05, vec![3.0, 1.0, 1.0, 1.0]).unwrap();
    let env = Environment::new(&law, 1).unwrap();
    let mut replica = 0u64;
    c.bench_function("run_slab_L16", |b| {
        b.iter(|| {
            replica += 1;
            run_slab(&env, &[1.0, 0.0], 16.0, 16.0, &[0, 0], 25_600, 7, black_box(replica)).unwrap()
        })
    });
    let mut group = c.benchmark_group("mc_slab");
    group.sample_size(10);
    group.bench_function("annealed_L8_1e4", |b| {
        b.iter(|| {
            mc_slab_estimate(&law, &[1.0, 0.0], 8.0, Sampling::Annealed { replicas: 10_000 }, None, 3)
                .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, walks);
criterion_main!(benches);
