use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use drxcast::drx::DrxConfig;
use drxcast::report::drx_compare::user_traffic;
use drxcast::sim::{run, Scheme, SimConfig};
use drxcast::trace_io::SynthDefaults;

fn simulation(c: &mut Criterion) {
    let d = SynthDefaults::builtin();
    let sim = SimConfig {
        duration_ttis: 60_000,
        ..SimConfig::default()
    };
    let traffic = user_traffic(&d, &d.drx_user, sim.n_ues, sim.duration_s(), sim.tti_ms, 1).unwrap();
    let mut g = c.benchmark_group("sim");
    g.sample_size(20);
    for set in [2u8, 3] {
        let cfg = DrxConfig::set(set).unwrap();
        g.bench_function(format!("10 UEs, 60 s, set {set}"), |b| {
            b.iter(|| run(&sim, black_box(&traffic), Scheme::uniform("s", cfg, sim.n_ues), 0).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, simulation);
criterion_main!(benches);
