mod common;

use std::collections::BTreeSet;

use pimolap_core::engine::{
    self, choose_groups, cost_of, estimate_groups, CostModel, EngineConfig, EngineMode, GroupEstimate, GroupEstimates,
};
use pimolap_core::oracle::eval_predicate;
use pimolap_core::workload::{random_predicate, random_table};
use pimolap_core::{parse_query, AttributeSpec, QueryIR, Split};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{alternate_split, load, table};

fn estimates(values: &[f64]) -> GroupEstimates {
    GroupEstimates {
        sample_fraction: 1.0,
        groups: values
            .iter()
            .enumerate()
            .map(|(i, &e)| GroupEstimate { key: vec![i as i64], sampled: e as u64, estimate: e })
            .collect(),
        unseen_mass_flag: false,
    }
}

fn subsets(n: usize) -> impl Iterator<Item = BTreeSet<Vec<i64>>> {
    (0u32..1 << n).map(move |m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| vec![i as i64]).collect())
}

proptest! {
    #[test]
    fn greedy_choice_is_optimal_and_never_worse_than_pure(
        sizes in prop::collection::vec(0.0f64..5000.0, 1..9),
        pim in 1.0f64..20000.0,
        host in 0.1f64..50.0,
    ) {
        let est = estimates(&sizes);
        let model = CostModel { pim_group_cost: pim, host_record_cost: host };
        let chosen = cost_of(&choose_groups(&est, &model), &est, &model);
        let all: BTreeSet<Vec<i64>> = est.groups.iter().map(|g| g.key.clone()).collect();
        let best = subsets(sizes.len()).map(|s| cost_of(&s, &est, &model)).fold(f64::INFINITY, f64::min);
        let tol = 1e-9 * best.abs().max(1.0);
        prop_assert!((chosen - best).abs() <= tol, "chosen {} best {}", chosen, best);
        prop_assert!(chosen <= cost_of(&all, &est, &model) + tol);
        prop_assert!(chosen <= cost_of(&BTreeSet::new(), &est, &model) + tol);
    }

    #[test]
    fn cost_is_linear_in_group_sizes(sizes in prop::collection::vec(0.0f64..5000.0, 1..9), k in 0.5f64..4.0) {
        let model = CostModel { pim_group_cost: 700.0, host_record_cost: 3.0 };
        let a = estimates(&sizes);
        let scaled: Vec<f64> = sizes.iter().map(|s| s * k).collect();
        let b = estimates(&scaled);
        let host_a = cost_of(&BTreeSet::new(), &a, &model);
        let host_b = cost_of(&BTreeSet::new(), &b, &model);
        prop_assert!((host_b - k * host_a).abs() <= 1e-9 * host_b.max(1.0));
        let all: BTreeSet<Vec<i64>> = a.groups.iter().map(|g| g.key.clone()).collect();
        prop_assert!((cost_of(&all, &a, &model) - 700.0 * sizes.len() as f64).abs() < 1e-6);
    }
}

#[test]
fn larger_groups_are_preferred_for_pim() {
    let est = estimates(&[10.0, 5000.0, 300.0, 20.0]);
    let model = CostModel { pim_group_cost: 1000.0, host_record_cost: 4.0 };
    let chosen = choose_groups(&est, &model);
    assert_eq!(chosen, [vec![1], vec![2]].into_iter().collect());
}

#[test]
fn sampled_estimates_are_unbiased() {
    let sizes = [4000i64, 1500, 600];
    let mut rows = Vec::new();
    for (g, &n) in sizes.iter().enumerate() {
        rows.extend((0..n).map(|i| vec![g as i64, i % 7]));
    }
    let t = table(vec![AttributeSpec::unsigned("g", 2), AttributeSpec::unsigned("v", 4)], rows);
    let mem = load(&t, 1024, 64, 32, Split::OneXb);
    let mut sums = [0.0f64; 3];
    for seed in 0..100 {
        let est = estimate_groups(&mem, &["g".to_string()], 0.05, seed).unwrap();
        for (g, s) in sums.iter_mut().enumerate() {
            *s += est.estimate(&[g as i64]).unwrap_or(0.0);
        }
    }
    for (g, &n) in sizes.iter().enumerate() {
        let mean = sums[g] / 100.0;
        assert!((mean - n as f64).abs() <= 0.05 * n as f64, "group {g}: mean {mean} vs {n}");
    }
    assert!(estimate_groups(&mem, &["g".to_string()], 0.0, 0).is_err());
    assert!(estimate_groups(&mem, &["g".to_string()], 1.5, 0).is_err());
}

#[test]
fn full_sample_is_exact() {
    let t = table(vec![AttributeSpec::unsigned("g", 2)], (0..999).map(|i| vec![i % 3]).collect());
    let mem = load(&t, 256, 32, 16, Split::OneXb);
    let est = estimate_groups(&mem, &["g".to_string()], 1.0, 9).unwrap();
    assert_eq!(est.groups.iter().map(|g| g.estimate).collect::<Vec<_>>(), vec![333.0; 3]);
    assert!(!est.unseen_mass_flag);
}

#[test]
fn filter_only_transfer_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..50 {
        let n = rng.gen_range(1..4000);
        let t = random_table(&mut rng, n);
        let pred = random_predicate(&mut rng, &t.schema, 3);
        let agg = t.schema.iter().find(|a| !a.signed).map(|a| a.name.clone()).unwrap();
        let ir = QueryIR {
            aggregates: parse_query(&format!("SELECT SUM({agg}), COUNT(*) FROM t")).unwrap().aggregates,
            from: "t".into(),
            predicate: Some(pred.clone()),
            group_by: vec![],
        };
        let selected = t.rows.iter().filter(|r| eval_predicate(&pred, &|n| r[t.index_of(n).unwrap()])).count() as u64;
        let width = t.spec(&agg).unwrap().width as u64;
        let mut mem = load(&t, 1024, 512, 320, Split::OneXb);
        let cfg = EngineConfig { mode: EngineMode::FilterOnly, ..Default::default() };
        let out = engine::run(&ir, &mut mem, &cfg).unwrap();
        assert_eq!(
            out.stats.pim_to_host_bits,
            t.rows.len() as u64 + selected * width,
            "case {case}: `{ir}`"
        );
        assert_eq!(out.stats.host_to_pim_bits, 0);
    }
}

#[test]
fn full_pim_transfers_less_than_filter_only_on_selective_queries() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let schema = vec![AttributeSpec::unsigned("k", 8), AttributeSpec::unsigned("v", 16)];
    let rows: Vec<Vec<i64>> = (0..20_000).map(|_| vec![rng.gen_range(0..256), rng.gen_range(0..65536)]).collect();
    let t = table(schema, rows);
    let ir = parse_query("SELECT SUM(v), MAX(v) FROM t WHERE k < 128").unwrap();
    let mut bits = Vec::new();
    for mode in [EngineMode::Pim, EngineMode::FilterOnly] {
        let mut mem = load(&t, 1024, 256, 200, Split::OneXb);
        let out = engine::run(&ir, &mut mem, &EngineConfig { mode, ..Default::default() }).unwrap();
        bits.push(out.stats.pim_to_host_bits);
        assert!(out.stats.reduction_ratio().unwrap() > 1.0, "{mode:?}");
    }
    assert!(bits[0] < bits[1], "{bits:?}");
}

#[test]
fn split_layout_moves_more_bits_for_cross_partition_queries() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let schema = vec![AttributeSpec::unsigned("a", 8), AttributeSpec::unsigned("b", 8), AttributeSpec::unsigned("v", 16)];
    let rows: Vec<Vec<i64>> =
        (0..8192).map(|_| vec![rng.gen_range(0..256), rng.gen_range(0..256), rng.gen_range(0..65536)]).collect();
    let t = table(schema.clone(), rows);
    let ir = parse_query("SELECT SUM(v) FROM t WHERE a < b AND b > 20").unwrap();
    let mut totals = Vec::new();
    for split in [Split::OneXb, alternate_split(&schema)] {
        let mut mem = load(&t, 1024, 128, 96, split);
        let out = engine::run(&ir, &mut mem, &EngineConfig::default()).unwrap();
        totals.push(out.stats.total_transfer_bits());
    }
    assert!(totals[1] > totals[0], "{totals:?}");
}

#[test]
fn hybrid_plan_cost_is_bounded_by_both_pure_strategies() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut rows = Vec::new();
    for g in 0..16i64 {
        let n = if g < 3 { 3000 } else { rng.gen_range(1..40) };
        rows.extend((0..n).map(|_| vec![g, rng.gen_range(0..256)]));
    }
    let t = table(vec![AttributeSpec::unsigned("g", 4), AttributeSpec::unsigned("v", 8)], rows);
    let ir = parse_query("SELECT SUM(v), COUNT(*) FROM t GROUP BY g").unwrap();
    let mem = load(&t, 1024, 128, 96, Split::OneXb);
    let cfg = EngineConfig { mode: EngineMode::HybridGroupBy, sample_fraction: 0.2, ..Default::default() };
    let plan = engine::plan(&ir, &mem, &cfg).unwrap();
    let c = plan.costs.unwrap();
    assert!(c.chosen <= c.pure_pim && c.chosen <= c.pure_host, "{c:?}");
    assert!(!plan.pim_groups.is_empty() && !plan.host_groups.is_empty(), "{:?}", plan.pim_groups);
    assert!(plan.pim_groups.iter().all(|k| k[0] < 3));
}
