mod common;

use std::collections::HashSet;

use pimolap_core::workload::random_table;
use pimolap_core::{plan_layout, store_records, AttributeSpec, Split};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::alternate_split;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn stored_records_round_trip(seed in any::<u64>(), records in 0usize..700, rows_pow in 3u32..9, two in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_table(&mut rng, records);
        let split = if two { alternate_split(&t.schema) } else { Split::OneXb };
        let layout = plan_layout(&t.schema, 1 << rows_pow, 256, 64, split).unwrap();
        let mem = store_records(layout, &t.rows).unwrap();
        prop_assert_eq!(mem.record_count(), records);
        prop_assert_eq!(mem.page_count(), records.div_ceil(1 << rows_pow));
        prop_assert_eq!(mem.inspect_records(), t.rows.clone());
        for (i, row) in t.rows.iter().enumerate().step_by(37) {
            prop_assert_eq!(&mem.read_record(i).unwrap(), row);
        }
        let valid = mem.inspect_col(mem.validity_col());
        prop_assert_eq!(valid.len(), records);
        prop_assert!(valid.iter().all(|&b| b));
    }

    #[test]
    fn locate_is_injective(seed in any::<u64>(), records in 1usize..300, two in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_table(&mut rng, records);
        let split = if two { alternate_split(&t.schema) } else { Split::OneXb };
        let layout = plan_layout(&t.schema, 32, 256, 64, split).unwrap();
        let mem = store_records(layout, &t.rows).unwrap();
        let layout = mem.layout();
        let mut seen = HashSet::new();
        for r in 0..records {
            for a in &t.schema {
                let loc = layout.locate(r, &a.name).unwrap();
                for c in 0..a.width as usize {
                    prop_assert!(seen.insert((loc.page, loc.slot, loc.row, loc.cols.col(c))));
                }
            }
        }
    }
}

#[test]
fn two_xb_places_second_list_in_slot_one() {
    let schema = vec![AttributeSpec::unsigned("a", 8), AttributeSpec::unsigned("b", 16), AttributeSpec::signed("c", 4)];
    let layout = plan_layout(&schema, 64, 64, 24, Split::TwoXb { second: vec!["b".into()] }).unwrap();
    assert_eq!(layout.slots(), 2);
    assert_eq!(layout.attr("a").unwrap().slot, 0);
    assert_eq!(layout.attr("b").unwrap().slot, 1);
    assert_eq!(layout.attr("c").unwrap().slot, 0);
    let a = layout.attr("a").unwrap().cols;
    let c = layout.attr("c").unwrap().cols;
    assert!(!a.overlaps(&c));
}

#[test]
fn oversized_schema_is_rejected() {
    let schema = vec![AttributeSpec::unsigned("a", 32), AttributeSpec::unsigned("b", 32)];
    assert!(plan_layout(&schema, 64, 64, 16, Split::OneXb).is_err());
    let t = vec![vec![1i64 << 40, 0]];
    let layout = plan_layout(&schema, 64, 128, 16, Split::OneXb).unwrap();
    assert!(store_records(layout, &t).is_err());
}

#[test]
fn attribute_reads_are_charged() {
    let schema = vec![AttributeSpec::unsigned("a", 8), AttributeSpec::unsigned("b", 16)];
    let layout = plan_layout(&schema, 16, 64, 16, Split::OneXb).unwrap();
    let mem = store_records(layout, &[vec![3, 900], vec![4, 5]]).unwrap();
    let before = mem.stats();
    assert_eq!(mem.read_attr(0, "b").unwrap(), 900);
    assert_eq!(mem.stats().since(&before).pim_to_host_bits, 16);
    let _ = mem.inspect_records();
    assert_eq!(mem.stats().since(&before).pim_to_host_bits, 16);
}
