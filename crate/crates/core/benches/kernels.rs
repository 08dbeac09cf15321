//! Per-node kernels with the rayon pool against a single-thread run of the
//! same code. Without the `parallel` feature only the sequential build is
//! measured; compare against `cargo bench --no-default-features`.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use plap_core::energy::{self, EnergyParams, ForcingTerm, Manufactured};
use plap_core::{DiscreteFunction, Domain, Mesh};

struct Case {
    mesh: Arc<Mesh>,
    u: DiscreteFunction,
    v: Vec<f64>,
    load: plap_core::Load,
    params: EnergyParams,
}

fn case(n: usize) -> Case {
    let domain = Domain::boxed(vec![(0.0, 1.0); 3]).unwrap();
    let mesh = Mesh::build(domain, &[n, n, n], 0.0).unwrap();
    let u = DiscreteFunction::from_fn(&mesh, |x| (x[0] * (1.0 - x[0])) * (3.0 * x[1]).sin() * x[2]);
    let load = ForcingTerm::Manufactured(Manufactured::Constant { value: 1.0 })
        .load(&mesh)
        .unwrap();
    Case {
        v: vec![0.5; mesh.len()],
        params: EnergyParams::new(1.5, 1.5, 0.1, 1e-3).unwrap(),
        mesh,
        u,
        load,
    }
}

fn kernels(c: &mut Criterion, label: &str, run: &dyn Fn(&mut (dyn FnMut() + Send))) {
    let mut group = c.benchmark_group("kernels");
    group.sample_size(20);
    for n in [17, 33] {
        let k = case(n);
        group.bench_function(BenchmarkId::new(format!("phi/{label}"), n), |b| {
            b.iter(|| {
                let mut out = 0.0;
                run(&mut || out = energy::phi(&k.u, &k.v, &k.load, &k.params));
                out
            })
        });
        group.bench_function(BenchmarkId::new(format!("phi_covector/{label}"), n), |b| {
            b.iter(|| {
                let mut out = Vec::new();
                run(&mut || out = energy::phi_covector(&k.u, &k.v, &k.load, &k.params));
                out
            })
        });
        group.bench_function(BenchmarkId::new(format!("stiffness/{label}"), n), |b| {
            b.iter(|| {
                let mut out = Vec::new();
                run(&mut || out = energy::stiffness_apply(&k.mesh, k.u.values()));
                out
            })
        });
    }
    group.finish();
}

fn sequential(c: &mut Criterion) {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        kernels(c, "one_thread", &|f| pool.install(|| f()));
    }
    #[cfg(not(feature = "parallel"))]
    kernels(c, "sequential", &|f| f());
}

fn parallel(c: &mut Criterion) {
    #[cfg(feature = "parallel")]
    kernels(c, "rayon", &|f| f());
    #[cfg(not(feature = "parallel"))]
    let _ = c;
}

criterion_group!(benches, sequential, parallel);
criterion_main!(benches);
