use pimolap_core::oracle::{baseline_bits, execute_host, execute_naive};
use pimolap_core::workload::{random_query, random_table};
use pimolap_core::{parse_query, AggValue, AttributeSpec, HostTable};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]
    #[test]
    fn grouped_oracle_agrees_with_naive_rescan(seed in any::<u64>(), records in 0usize..400) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_table(&mut rng, records);
        let groups: Vec<String> = t.schema.iter().filter(|a| a.name.starts_with('g')).map(|a| a.name.clone()).collect();
        let ir = random_query(&mut rng, &t.schema, &groups, 3, 4, 2);
        let (fast, _) = execute_host(&ir, &t).unwrap();
        let slow = execute_naive(&ir, &t).unwrap();
        prop_assert!(fast.matches(&slow, 0.0), "{}", ir);
    }

    #[test]
    fn record_order_does_not_matter(seed in any::<u64>(), records in 0usize..400) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_table(&mut rng, records);
        let groups: Vec<String> = t.schema.iter().filter(|a| a.name.starts_with('g')).map(|a| a.name.clone()).collect();
        let ir = random_query(&mut rng, &t.schema, &groups, 3, 4, 2);
        let mut shuffled = t.clone();
        shuffled.rows.shuffle(&mut rng);
        let (a, ba) = execute_host(&ir, &t).unwrap();
        let (b, bb) = execute_host(&ir, &shuffled).unwrap();
        prop_assert!(a.matches(&b, 0.0));
        prop_assert_eq!(ba, bb);
    }
}

fn small() -> HostTable {
    let mut t = HostTable::new(
        "t",
        vec![AttributeSpec::unsigned("g", 2), AttributeSpec::signed("v", 8), AttributeSpec::unsigned("w", 16)],
    );
    t.rows = vec![vec![0, -5, 10], vec![1, 7, 20], vec![0, 3, 30], vec![1, -128, 40]];
    t
}

#[test]
fn hand_computed_results() {
    let t = small();
    let ir = parse_query("SELECT SUM(v), MIN(v), MAX(w), COUNT(*), AVG(w) FROM t GROUP BY g").unwrap();
    let (r, baseline) = execute_host(&ir, &t).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert_eq!(r.rows[0].key, vec![0]);
    assert_eq!(r.rows[0].values[0], AggValue::Int(-2));
    assert_eq!(r.rows[0].values[1], AggValue::Int(-5));
    assert_eq!(r.rows[0].values[2], AggValue::Int(30));
    assert_eq!(r.rows[0].values[3], AggValue::Int(2));
    assert_eq!(r.rows[0].values[4], AggValue::avg(40, 2));
    assert_eq!(r.rows[1].values[0], AggValue::Int(-121));
    assert_eq!(r.rows[1].values[1], AggValue::Int(-128));
    // g, v and w referenced: (2 + 8 + 16) bits for each of 4 rows.
    assert_eq!(baseline, 4 * 26);
    assert_eq!(baseline_bits(&ir, &t.schema, 4).unwrap(), 104);
}

#[test]
fn empty_selection_yields_null_and_zero_count() {
    let t = small();
    let ir = parse_query("SELECT SUM(v), MIN(v), MAX(v), AVG(v), COUNT(*) FROM t WHERE g > 3").unwrap();
    let (r, _) = execute_host(&ir, &t).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert_eq!(&r.rows[0].values[..4], &[AggValue::Null, AggValue::Null, AggValue::Null, AggValue::Null]);
    assert_eq!(r.rows[0].values[4], AggValue::Int(0));
    let grouped = parse_query("SELECT COUNT(*) FROM t WHERE g > 3 GROUP BY g").unwrap();
    assert!(execute_host(&grouped, &t).unwrap().0.rows.is_empty());
}

#[test]
fn products_beyond_i64_are_exact() {
    let mut t = HostTable::new("t", vec![AttributeSpec::unsigned("a", 32), AttributeSpec::unsigned("b", 32)]);
    t.rows = vec![vec![u32::MAX as i64, u32::MAX as i64]; 4];
    let ir = parse_query("SELECT SUM(a * b) FROM t").unwrap();
    let (r, _) = execute_host(&ir, &t).unwrap();
    assert_eq!(r.rows[0].values[0], AggValue::Int(4 * (u32::MAX as i128) * (u32::MAX as i128)));
}

#[test]
fn unknown_attribute_is_an_error() {
    let ir = parse_query("SELECT SUM(zz) FROM t").unwrap();
    assert!(execute_host(&ir, &small()).is_err());
}
