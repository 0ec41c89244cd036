//! Shared fixtures for the criterion benchmarks.

use pimolap_core::schema::{dimension_attrs, gen_ssb_lite, prejoin};
use pimolap_core::{plan_layout, store_records, AttributeSpec, HostTable, PimMemory, Split};

/// Geometry used by every fixture: 1024 x 1024 arrays with 256 scratch columns.
pub const ROWS: usize = 1024;
pub const COLS: usize = 1024;
pub const SCRATCH: usize = 256;

/// Stores `table` in fresh memory.
pub fn store(table: &HostTable, split: Split) -> PimMemory {
    let layout = plan_layout(&table.schema, ROWS, COLS, SCRATCH, split).expect("fixture layout fits");
    store_records(layout, &table.rows).expect("fixture records fit")
}

/// Two `width`-bit unsigned attributes `x`, `y` over `records` rows, filled
/// with a fixed pattern.
pub fn pair_table(width: u32, records: usize) -> HostTable {
    let mask = (1i64 << width) - 1;
    let mut t = HostTable::new("t", vec![AttributeSpec::unsigned("x", width), AttributeSpec::unsigned("y", width)]);
    t.rows = (0..records as i64).map(|i| vec![(i * 2654435761) & mask, (i * 40503 + 7) & mask]).collect();
    t
}

/// Scale-`scale` SSB-lite wide relation stored under `two_xb` when `split`.
pub fn ssb_memory(scale: usize, seed: u64, split: bool) -> PimMemory {
    let star = gen_ssb_lite(scale, seed);
    let wide = prejoin(&star).expect("generated star is consistent");
    let s = if split { Split::TwoXb { second: dimension_attrs(&star) } } else { Split::OneXb };
    store(&wide, s)
}
