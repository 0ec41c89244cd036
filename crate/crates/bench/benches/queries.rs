use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pimolap_bench::ssb_memory;
use pimolap_core::engine::{self, EngineConfig, EngineMode};
use pimolap_core::parse_query;
use pimolap_core::workload::ssb_suite;

fn suite(c: &mut Criterion) {
    let mut g = c.benchmark_group("ssb");
    g.sample_size(10);
    for (mode, split) in [(EngineMode::Pim, false), (EngineMode::Pim, true), (EngineMode::FilterOnly, false)] {
        let mut mem = ssb_memory(1, 42, split);
        let cfg = EngineConfig { mode, ..Default::default() };
        let label = format!("{}-{}", mode.name(), if split { "two_xb" } else { "one_xb" });
        for entry in ssb_suite().iter().filter(|e| ["q1.1", "q2.1", "q5.2"].contains(&e.name.as_str())) {
            let ir = parse_query(&entry.query).unwrap();
            g.bench_with_input(BenchmarkId::new(&label, &entry.name), &ir, |b, ir| {
                b.iter(|| engine::run(ir, &mut mem, &cfg).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, suite);
criterion_main!(benches);
