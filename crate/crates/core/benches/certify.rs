use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use newtonize::exec::Exec;
use newtonize::kernel::{check_transitivity_with, validate_matrix};
use newtonize::metrize::chain_metric_with;
use newtonize::stripes::certify_tau_with;
use newtonize::synth::{generate_points, kernel_matrix, KernelSpec};
use newtonize::{decompose, AffinityMatrix, TransitivityModulus};

fn executors() -> Vec<(&'static str, Exec)> {
    let mut v = vec![("sequential", Exec::Sequential)];
    #[cfg(feature = "parallel")]
    v.push(("parallel", Exec::Parallel));
    v
}

fn world(n: usize) -> (AffinityMatrix, TransitivityModulus) {
    let spec = KernelSpec::InvPow { p: 1.0 };
    let pts = generate_points(n, 3, n as u64).unwrap();
    let k = validate_matrix(&kernel_matrix(&pts, spec).unwrap()).unwrap();
    (k, spec.modulus().unwrap())
}

fn bench(c: &mut Criterion) {
    for n in [100, 300] {
        let (k, nu) = world(n);
        let dec = decompose(&k, &nu).unwrap();
        let alpha = 1.0 / dec.beta();
        let delta = dec.delta();

        let mut g = c.benchmark_group("transitivity");
        g.sample_size(10);
        for (name, exec) in executors() {
            g.bench_with_input(BenchmarkId::new(name, n), &exec, |b, &e| {
                b.iter(|| check_transitivity_with(&k, &nu, e))
            });
        }
        g.finish();

        let mut g = c.benchmark_group("chain_metric");
        g.sample_size(10);
        for (name, exec) in executors() {
            g.bench_with_input(BenchmarkId::new(name, n), &exec, |b, &e| {
                b.iter(|| chain_metric_with(delta, alpha, e).unwrap())
            });
        }
        g.finish();

        let mut g = c.benchmark_group("tau");
        g.sample_size(10);
        for (name, exec) in executors() {
            g.bench_with_input(BenchmarkId::new(name, n), &exec, |b, &e| {
                b.iter(|| certify_tau_with(delta.n(), delta.entries(), e).unwrap())
            });
        }
        g.finish();
    }
}

criterion_group!(benches, bench);
criterion_main!(benches);
