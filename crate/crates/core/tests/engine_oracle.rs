mod common;

use pimolap_core::engine::{self, EngineConfig, EngineMode};
use pimolap_core::oracle::execute_host;
use pimolap_core::workload::{random_query, random_table};
use pimolap_core::{parse_query, Circuit, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{alternate_split, load, table};

fn configs() -> Vec<(EngineMode, Circuit, bool)> {
    let mut v = Vec::new();
    for mode in [EngineMode::Pim, EngineMode::HybridGroupBy, EngineMode::FilterOnly] {
        for circuit in [Circuit::PurePim, Circuit::Peripheral] {
            for two in [false, true] {
                v.push((mode, circuit, two));
            }
        }
    }
    v
}

#[test]
fn random_queries_match_oracle_in_every_configuration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..120 {
        let records = rng.gen_range(0..3000);
        let t = random_table(&mut rng, records);
        let groups: Vec<String> = t.schema.iter().filter(|a| a.name.starts_with('g')).map(|a| a.name.clone()).collect();
        let ir = random_query(&mut rng, &t.schema, &groups, 3, 4, 2);
        let (expected, baseline) = execute_host(&ir, &t).unwrap();
        let rows = *[16usize, 64, 256].get(case % 3).unwrap();
        let (mode, circuit, two) = configs()[case % configs().len()];
        let split = if two { alternate_split(&t.schema) } else { Split::OneXb };
        let mut mem = load(&t, rows, 512, 320, split);
        let cfg = EngineConfig { mode, circuit, sample_fraction: 0.2, seed: case as u64, ..Default::default() };
        let out = engine::run(&ir, &mut mem, &cfg).unwrap_or_else(|e| panic!("case {case} `{ir}`: {e}"));
        assert!(
            out.table.matches(&expected, 1e-9),
            "case {case} {mode:?} {circuit:?} two={two} `{ir}`\n got {:?}\nwant {:?}",
            out.table.rows,
            expected.rows
        );
        assert_eq!(out.stats.host_baseline_bits, baseline);
    }
}

#[test]
fn unsampled_single_record_groups_are_reported() {
    let mut rows: Vec<Vec<i64>> = (0..4000).map(|i| vec![0, i % 100]).collect();
    for g in 1..=10 {
        rows.push(vec![g, 7]);
    }
    let t = table(
        vec![pimolap_core::AttributeSpec::unsigned("g", 8), pimolap_core::AttributeSpec::unsigned("v", 8)],
        rows,
    );
    let ir = parse_query("SELECT SUM(v), COUNT(*) FROM t GROUP BY g").unwrap();
    let (expected, _) = execute_host(&ir, &t).unwrap();
    assert_eq!(expected.rows.len(), 11);
    for seed in 0..5 {
        for mode in [EngineMode::Pim, EngineMode::HybridGroupBy] {
            let mut mem = load(&t, 1024, 128, 96, Split::OneXb);
            let cfg = EngineConfig { mode, sample_fraction: 0.01, seed, ..Default::default() };
            let out = engine::run(&ir, &mut mem, &cfg).unwrap();
            assert!(out.table.matches(&expected, 0.0), "seed {seed} {mode:?}");
        }
    }
}

#[test]
fn empty_non_grouped_selection_on_pim() {
    let t = table(vec![pimolap_core::AttributeSpec::signed("v", 8)], (0..100).map(|i| vec![i - 50]).collect());
    let ir = parse_query("SELECT SUM(v), MIN(v), MAX(v), AVG(v), COUNT(*) FROM t WHERE v > 100").unwrap();
    let (expected, _) = execute_host(&ir, &t).unwrap();
    for circuit in [Circuit::PurePim, Circuit::Peripheral] {
        let mut mem = load(&t, 64, 128, 96, Split::OneXb);
        let cfg = EngineConfig { circuit, ..Default::default() };
        let out = engine::run(&ir, &mut mem, &cfg).unwrap();
        assert!(out.table.matches(&expected, 0.0), "{circuit:?} {:?}", out.table.rows);
    }
}

#[test]
fn scratch_is_fully_returned_after_each_query() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let t = random_table(&mut rng, 900);
    let groups: Vec<String> = t.schema.iter().filter(|a| a.name.starts_with('g')).map(|a| a.name.clone()).collect();
    let mut mem = load(&t, 128, 512, 320, alternate_split(&t.schema));
    let free: Vec<usize> = (0..2).map(|s| mem.scratch_free_columns(s)).collect();
    for i in 0..30 {
        let ir = random_query(&mut rng, &t.schema, &groups, 3, 3, 2);
        let (mode, circuit, _) = configs()[i % configs().len()];
        let cfg = EngineConfig { mode, circuit, sample_fraction: 0.5, ..Default::default() };
        engine::run(&ir, &mut mem, &cfg).unwrap();
        let now: Vec<usize> = (0..2).map(|s| mem.scratch_free_columns(s)).collect();
        assert_eq!(now, free, "after `{ir}`");
    }
}
