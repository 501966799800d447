use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rwre_core::geometry::{BoxSpec, Rotation};
use rwre_core::solver::{exact_exit_with, Method, SolverOptions};
use rwre_core::{Environment, EnvironmentLaw};

fn solves(c: &mut Criterion) {
    let law = EnvironmentLaw::dirichlet_floor(2, 0.05, vec![2.0, 1.0, 1.0, 1.0]).unwrap();
    let env = Environment::new(&law, 5).unwrap();
    let mut group = c.benchmark_group("exact_exit");
    group.sample_size(10);
    for half in [4.5, 10.5, 20.5] {
        let b = BoxSpec::new(Rotation::new(&[1.0, 0.0]).unwrap(), half, half, half).unwrap();
        for method in [Method::Direct, Method::Relaxation] {
            let opts = SolverOptions { method, ..Default::default() };
            group.bench_with_input(BenchmarkId::new(format!("{method:?}"), half), &b, |bench, b| {
                bench.iter(|| exact_exit_with(&env, b, &[0, 0], &opts).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, solves);
criterion_main!(benches);
