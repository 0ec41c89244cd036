#![allow(dead_code)]

use pimolap_core::{plan_layout, store_records, AttributeSpec, HostTable, PimMemory, Split};

/// Stores `table` with the given geometry.
pub fn load(table: &HostTable, rows: usize, cols: usize, scratch: usize, split: Split) -> PimMemory {
    let layout = plan_layout(&table.schema, rows, cols, scratch, split).expect("layout fits");
    store_records(layout, &table.rows).expect("records fit")
}

pub fn table(schema: Vec<AttributeSpec>, rows: Vec<Vec<i64>>) -> HostTable {
    let mut t = HostTable::new("t", schema);
    t.rows = rows;
    t
}

/// Split putting every other attribute in the second array.
pub fn alternate_split(schema: &[AttributeSpec]) -> Split {
    Split::TwoXb { second: schema.iter().skip(1).step_by(2).map(|a| a.name.clone()).collect() }
}
