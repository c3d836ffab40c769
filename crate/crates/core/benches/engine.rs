use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;

use doss_core::engine::{Execution, McParams};
use doss_core::potentials::{PotentialSpec, PotentialTerm, TimeDependentPotential};
use doss_core::propagator::{propagate_grid, PropagatorRequest};
use doss_core::states::InitialState;

fn request(base: PotentialSpec, execution: Execution) -> PropagatorRequest {
    PropagatorRequest::new(
        TimeDependentPotential::time_independent(base),
        InitialState::hermite(0),
        0.0,
        0.5,
        Complex64::new(0.0, 0.0),
        McParams::new(4096, 100, 1).with_execution(execution),
    )
}

fn propagate(c: &mut Criterion) {
    let xs = [-1.0, 0.0, 1.0];
    let cases = [
        ("free", PotentialSpec::zero()),
        ("sextic", PotentialSpec::new(vec![PotentialTerm::sextic(1.0)]).unwrap()),
    ];
    let mut group = c.benchmark_group("propagate_grid");
    group.sample_size(10);
    for (label, base) in cases {
        for (mode, execution) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
            let req = request(base.clone(), execution);
            group.bench_with_input(BenchmarkId::new(label, mode), &req, |b, req| {
                b.iter(|| propagate_grid(req, &xs).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, propagate);
criterion_main!(benches);
