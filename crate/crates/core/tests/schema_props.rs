mod common;

use std::fs;

use pimolap_core::schema::{
    apply_dimension_update, dimension_attrs, gen_ssb_lite, load_csv, prejoin, update_star, wide_name, SchemaError,
    StarDescriptor,
};
use pimolap_core::{CmpOp, PredicateExpr, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::load;

#[test]
fn generated_star_round_trips_through_csv() {
    let star = gen_ssb_lite(1, 7);
    let dir = tempfile::tempdir().unwrap();
    star.write_csv(dir.path()).unwrap();
    let desc = StarDescriptor::from_json(&fs::read_to_string(dir.path().join("schema.json")).unwrap()).unwrap();
    let back = load_csv(dir.path(), &desc).unwrap();
    assert_eq!(back, star);
}

const DESC: &str = r#"{
  "fact": {"name": "sales", "file": "sales.csv", "attributes": [
    {"name": "storekey"}, {"name": "amount"}]},
  "foreign_keys": [{"column": "storekey", "dimension": "store"}],
  "dimensions": [{"name": "store", "file": "store.csv", "key": "storekey", "attributes": [
    {"name": "storekey"}, {"name": "city", "type": "string"}, {"name": "size"}]}]
}"#;

fn write_small(dir: &std::path::Path, sales: &str) {
    fs::write(dir.join("store.csv"), "storekey,city,size\n1,Oslo,10\n2,Lima,20\n3,Oslo,5\n4,Pune,7\n").unwrap();
    fs::write(dir.join("sales.csv"), sales).unwrap();
}

#[test]
fn string_columns_are_dictionary_encoded_in_first_appearance_order() {
    let dir = tempfile::tempdir().unwrap();
    write_small(dir.path(), "storekey,amount\n1,100\n3,-4\n4,9\n");
    let star = load_csv(dir.path(), &StarDescriptor::from_json(DESC).unwrap()).unwrap();
    assert_eq!(star.dictionaries["store.city"], vec!["Oslo", "Lima", "Pune"]);
    let store = &star.dimension("store").unwrap().table;
    assert_eq!(store.column("city").unwrap(), vec![0, 1, 0, 2]);
    let amount = star.fact.spec("amount").unwrap();
    assert!(amount.signed);
    assert_eq!(amount.width, 8);
    assert_eq!(store.spec("size").unwrap().width, 8);

    let out = tempfile::tempdir().unwrap();
    star.write_csv(out.path()).unwrap();
    let text = fs::read_to_string(out.path().join("store.csv")).unwrap();
    assert!(text.contains("Lima"));
    let desc = StarDescriptor::from_json(&fs::read_to_string(out.path().join("schema.json")).unwrap()).unwrap();
    assert_eq!(load_csv(out.path(), &desc).unwrap(), star);
}

#[test]
fn dangling_foreign_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_small(dir.path(), "storekey,amount\n1,100\n9,3\n");
    let err = load_csv(dir.path(), &StarDescriptor::from_json(DESC).unwrap()).unwrap_err();
    assert!(matches!(err, SchemaError::DanglingKey { value: 9, .. }), "{err}");
}

#[test]
fn malformed_cells_and_missing_columns_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    write_small(dir.path(), "storekey,amount\n1,abc\n");
    let err = load_csv(dir.path(), &StarDescriptor::from_json(DESC).unwrap()).unwrap_err();
    assert!(matches!(err, SchemaError::Unparsable { row: 0, .. }), "{err}");
    write_small(dir.path(), "storekey,total\n1,3\n");
    let err = load_csv(dir.path(), &StarDescriptor::from_json(DESC).unwrap()).unwrap_err();
    assert!(matches!(err, SchemaError::MissingColumn { .. }), "{err}");
}

#[test]
fn prejoin_rows_equal_fact_rows_extended_by_looked_up_dimension_rows() {
    for seed in 0..20 {
        let star = gen_ssb_lite(1, seed);
        let wide = prejoin(&star).unwrap();
        assert_eq!(wide.rows.len(), star.fact.rows.len());
        let nf = star.fact.schema.len();
        assert_eq!(wide.schema.len(), nf + dimension_attrs(&star).len());
        for (i, (w, f)) in wide.rows.iter().zip(&star.fact.rows).enumerate().step_by(97) {
            assert_eq!(&w[..nf], &f[..]);
            for fk in &star.foreign_keys {
                let dim = star.dimension(&fk.dimension).unwrap();
                let key = f[star.fact.index_of(&fk.column).unwrap()];
                let k = dim.table.index_of(&dim.key).unwrap();
                let drow = dim.table.rows.iter().find(|r| r[k] == key).unwrap();
                for (j, a) in dim.table.schema.iter().enumerate().filter(|(_, a)| a.name != dim.key) {
                    let col = wide.index_of(&wide_name(&dim.table.name, &a.name)).unwrap();
                    assert_eq!(w[col], drow[j], "seed {seed} row {i} {}", a.name);
                }
            }
        }
    }
}

#[test]
fn in_memory_dimension_update_matches_rejoin_without_host_reads() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut star = gen_ssb_lite(1, 3);
    let wide = prejoin(&star).unwrap();
    let mut mem = load(&wide, 1024, 1024, 256, Split::OneXb);
    for i in 0..20 {
        let d = &star.dimensions[i % star.dimensions.len()];
        let dim = d.table.name.clone();
        let key = d.key.clone();
        let attrs: Vec<_> = d.table.schema.iter().filter(|a| a.name != key).cloned().collect();
        let attr = attrs[rng.gen_range(0..attrs.len())].clone();
        let keys = d.table.column(&key).unwrap();
        let pivot = keys[rng.gen_range(0..keys.len())];
        let op = [CmpOp::Eq, CmpOp::Lt, CmpOp::Ge][i % 3];
        let mut pred = PredicateExpr::cmp_imm(key.clone(), op, pivot);
        if i % 4 == 3 {
            let other = &attrs[rng.gen_range(0..attrs.len())];
            let v = d.table.column(&other.name).unwrap()[0];
            pred = pred.or(PredicateExpr::cmp_imm(other.name.clone(), CmpOp::Le, v));
        }
        let value = rng.gen_range(attr.min_value() as i64..=attr.max_value().min(1 << 20) as i64);
        update_star(&mut star, &dim, &attr.name, &pred, value).unwrap();
        let before = mem.stats();
        apply_dimension_update(&mut mem, &star, &dim, &attr.name, &pred, value).unwrap();
        let delta = mem.stats().since(&before);
        assert_eq!(delta.pim_to_host_bits, 0, "update {i}");
        assert_eq!(delta.host_to_pim_bits, 0, "update {i}");
        assert_eq!(mem.inspect_records(), prejoin(&star).unwrap().rows, "update {i}: {dim}.{} where {pred}", attr.name);
    }
}
