//! Relation-to-crossbar mapping.
//!
//! One record per array row, each attribute a contiguous column range
//! (least-significant bit at the lowest column), and a reserved block of
//! scratch columns at the top of every array for PIM results. A page holds
//! one array, or an array pair when the relation is split vertically.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossbar::{CellArray, CrossbarError};
use crate::relation::AttributeSpec;
use crate::stats::{Tally, TransferStats};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("attribute `{attr}` does not fit: needs columns up to {needed}, {available} available before scratch")]
    AttributeOverflow { attr: String, needed: usize, available: usize },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("duplicate attribute `{0}`")]
    DuplicateAttribute(String),
    #[error("attribute `{attr}` has invalid width {width} (must be 1..=64)")]
    InvalidWidth { attr: String, width: u32 },
    #[error("scratch must reserve at least one column")]
    NoScratch,
    #[error("record {record}: value {value} does not fit attribute `{attr}`")]
    ValueOverflow { record: usize, attr: String, value: i64 },
    #[error("record {record} has {got} values, schema has {expected}")]
    RecordArity { record: usize, got: usize, expected: usize },
    #[error("record index {record} out of range ({count} records)")]
    RecordOutOfRange { record: usize, count: usize },
    #[error("scratch exhausted in slot {slot}: requested {requested} columns, {available} contiguous available")]
    ScratchExhausted { slot: usize, requested: usize, available: usize },
    #[error("invalid scratch release in slot {slot}: {range:?}")]
    BadRelease { slot: usize, range: ColRange },
    #[error(transparent)]
    Crossbar(#[from] CrossbarError),
}

/// Half-open column range `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColRange {
    pub start: usize,
    pub len: usize,
}

impl ColRange {
    pub fn new(start: usize, len: usize) -> Self {
        ColRange { start, len }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn cols(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }

    pub fn col(&self, i: usize) -> usize {
        debug_assert!(i < self.len);
        self.start + i
    }

    pub fn overlaps(&self, other: &ColRange) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

/// Column range inside a specific array slot of every page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotRange {
    pub slot: usize,
    pub range: ColRange,
}

impl SlotRange {
    pub fn new(slot: usize, start: usize, len: usize) -> Self {
        SlotRange { slot, range: ColRange::new(start, len) }
    }

    pub fn col(&self, i: usize) -> usize {
        self.range.col(i)
    }

    pub fn len(&self) -> usize {
        self.range.len
    }

    pub fn is_empty(&self) -> bool {
        self.range.len == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Split {
    OneXb,
    /// Attributes listed in `second` go to array slot 1, the rest to slot 0.
    TwoXb { second: Vec<String> },
}

impl Split {
    pub fn slots(&self) -> usize {
        match self {
            Split::OneXb => 1,
            Split::TwoXb { .. } => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Split::OneXb => "one_xb",
            Split::TwoXb { .. } => "two_xb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrPlacement {
    #[serde(flatten)]
    pub spec: AttributeSpec,
    pub slot: usize,
    pub cols: ColRange,
}

impl AttrPlacement {
    pub fn slot_range(&self) -> SlotRange {
        SlotRange { slot: self.slot, range: self.cols }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageDesc {
    pub index: usize,
    pub live_rows: usize,
}

/// Where a stored value lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    pub page: usize,
    pub slot: usize,
    pub row: usize,
    pub cols: ColRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationLayout {
    pub schema: Vec<AttributeSpec>,
    pub split: Split,
    pub rows_per_array: usize,
    pub cols_per_array: usize,
    pub attributes: Vec<AttrPlacement>,
    /// Scratch columns per slot.
    pub scratch: Vec<ColRange>,
    pub record_count: usize,
    pub pages: Vec<PageDesc>,
}

/// Packs `schema` left to right in schema order; scratch takes the top
/// `scratch_bits` columns of each array.
pub fn plan_layout(
    schema: &[AttributeSpec],
    array_rows: usize,
    array_cols: usize,
    scratch_bits: usize,
    split: Split,
) -> Result<RelationLayout, LayoutError> {
    if array_rows == 0 || array_cols == 0 {
        return Err(CrossbarError::ZeroDimension { rows: array_rows, cols: array_cols }.into());
    }
    if scratch_bits == 0 {
        return Err(LayoutError::NoScratch);
    }
    let mut seen = HashSet::new();
    for a in schema {
        if !seen.insert(a.name.as_str()) {
            return Err(LayoutError::DuplicateAttribute(a.name.clone()));
        }
        if a.width == 0 || a.width > 64 {
            return Err(LayoutError::InvalidWidth { attr: a.name.clone(), width: a.width });
        }
    }
    let second: HashSet<&str> = match &split {
        Split::OneXb => HashSet::new(),
        Split::TwoXb { second } => {
            for n in second {
                if !seen.contains(n.as_str()) {
                    return Err(LayoutError::UnknownAttribute(n.clone()));
                }
            }
            second.iter().map(String::as_str).collect()
        }
    };
    let slots = split.slots();
    let available = array_cols.saturating_sub(scratch_bits);
    let mut next = vec![0usize; slots];
    let mut attributes = Vec::with_capacity(schema.len());
    for a in schema {
        let slot = usize::from(second.contains(a.name.as_str()));
        let start = next[slot];
        let end = start + a.width as usize;
        if end > available {
            return Err(LayoutError::AttributeOverflow { attr: a.name.clone(), needed: end, available });
        }
        next[slot] = end;
        attributes.push(AttrPlacement { spec: a.clone(), slot, cols: ColRange::new(start, a.width as usize) });
    }
    if scratch_bits > array_cols {
        return Err(LayoutError::AttributeOverflow { attr: "<scratch>".into(), needed: scratch_bits, available: array_cols });
    }
    Ok(RelationLayout {
        schema: schema.to_vec(),
        split,
        rows_per_array: array_rows,
        cols_per_array: array_cols,
        attributes,
        scratch: vec![ColRange::new(available, scratch_bits); slots],
        record_count: 0,
        pages: Vec::new(),
    })
}

impl RelationLayout {
    pub fn slots(&self) -> usize {
        self.split.slots()
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn attr(&self, name: &str) -> Result<&AttrPlacement, LayoutError> {
        self.attributes
            .iter()
            .find(|a| a.spec.name == name)
            .ok_or_else(|| LayoutError::UnknownAttribute(name.to_string()))
    }

    fn set_record_count(&mut self, n: usize) {
        self.record_count = n;
        let rpa = self.rows_per_array;
        self.pages = (0..n.div_ceil(rpa))
            .map(|i| PageDesc { index: i, live_rows: (n - i * rpa).min(rpa) })
            .collect();
    }

    pub fn locate(&self, record: usize, attr: &str) -> Result<Location, LayoutError> {
        let a = self.attr(attr)?;
        if record >= self.record_count {
            return Err(LayoutError::RecordOutOfRange { record, count: self.record_count });
        }
        Ok(Location { page: record / self.rows_per_array, slot: a.slot, row: record % self.rows_per_array, cols: a.cols })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }
}

/// First-fit allocator over one slot's scratch columns. Allocation is
/// uniform across pages, so a compiled program is a valid template everywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScratchPool {
    slot: usize,
    range: ColRange,
    used: Vec<bool>,
}

impl ScratchPool {
    pub fn new(slot: usize, range: ColRange) -> Self {
        ScratchPool { slot, range, used: vec![false; range.len] }
    }

    pub fn alloc(&mut self, n: usize) -> Result<ColRange, LayoutError> {
        let mut run = 0;
        let mut best = 0;
        for i in 0..self.used.len() {
            if self.used[i] {
                run = 0;
                continue;
            }
            run += 1;
            best = best.max(run);
            if run == n {
                let first = i + 1 - n;
                self.used[first..=i].iter_mut().for_each(|u| *u = true);
                return Ok(ColRange::new(self.range.start + first, n));
            }
        }
        Err(LayoutError::ScratchExhausted { slot: self.slot, requested: n, available: best })
    }

    pub fn free(&mut self, r: ColRange) -> Result<(), LayoutError> {
        if r.start < self.range.start || r.end() > self.range.end() {
            return Err(LayoutError::BadRelease { slot: self.slot, range: r });
        }
        let off = r.start - self.range.start;
        let cells = &mut self.used[off..off + r.len];
        if cells.iter().any(|u| !u) {
            return Err(LayoutError::BadRelease { slot: self.slot, range: r });
        }
        cells.iter_mut().for_each(|u| *u = false);
        Ok(())
    }

    pub fn free_columns(&self) -> usize {
        self.used.iter().filter(|u| !**u).count()
    }

    pub fn contains(&self, col: usize) -> bool {
        self.range.cols().contains(&col)
    }
}

/// Relation stored in cell arrays, with the host-visible access path.
///
/// All host reads and writes go through methods here so transfer tallies
/// stay complete.
#[derive(Debug, Clone)]
pub struct PimMemory {
    pub(crate) layout: RelationLayout,
    /// `pages[p][slot]`
    pub(crate) pages: Vec<Vec<CellArray>>,
    pub(crate) tally: Tally,
    pub(crate) pools: Vec<ScratchPool>,
    pub(crate) validity: usize,
}

/// Stores `records` (row-major, schema order) into fresh cell arrays.
///
/// A 1-bit validity column is permanently taken from slot 0 scratch to mark
/// live rows, so partially filled last pages never produce ghost records.
pub fn store_records(mut layout: RelationLayout, records: &[Vec<i64>]) -> Result<PimMemory, LayoutError> {
    let n_attrs = layout.schema.len();
    for (i, r) in records.iter().enumerate() {
        if r.len() != n_attrs {
            return Err(LayoutError::RecordArity { record: i, got: r.len(), expected: n_attrs });
        }
        for (a, &v) in layout.schema.iter().zip(r) {
            if !a.fits(v as i128) {
                return Err(LayoutError::ValueOverflow { record: i, attr: a.name.clone(), value: v });
            }
        }
    }
    layout.set_record_count(records.len());
    let mut pools: Vec<ScratchPool> =
        layout.scratch.iter().enumerate().map(|(s, r)| ScratchPool::new(s, *r)).collect();
    let validity = pools[0].alloc(1)?.start;
    let slots = layout.slots();
    let rpa = layout.rows_per_array;
    let cols = layout.cols_per_array;
    let mut pages = Vec::with_capacity(layout.page_count());
    for _ in 0..layout.page_count() {
        let mut arrays = Vec::with_capacity(slots);
        for _ in 0..slots {
            arrays.push(CellArray::new(rpa, cols)?);
        }
        pages.push(arrays);
    }
    let tally = Tally::default();
    for (i, r) in records.iter().enumerate() {
        let (p, row) = (i / rpa, i % rpa);
        for (place, &v) in layout.attributes.iter().zip(r) {
            let bits = place.spec.encode(v);
            pages[p][place.slot].write_field(row, place.cols.start, place.cols.len, bits as u128)?;
            tally.add_host_to_pim(place.cols.len as u64);
        }
        pages[p][0].write_field(row, validity, 1, 1)?;
        tally.add_host_to_pim(1);
    }
    Ok(PimMemory { layout, pages, tally, pools, validity })
}

impl PimMemory {
    pub fn layout(&self) -> &RelationLayout {
        &self.layout
    }

    pub fn record_count(&self) -> usize {
        self.layout.record_count
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn rows_per_array(&self) -> usize {
        self.layout.rows_per_array
    }

    /// Slot-0 column marking live rows.
    pub fn validity_col(&self) -> SlotRange {
        SlotRange::new(0, self.validity, 1)
    }

    pub fn array(&self, page: usize, slot: usize) -> &CellArray {
        &self.pages[page][slot]
    }

    /// Current counters. `host_baseline_bits` is always zero here.
    pub fn stats(&self) -> TransferStats {
        let (p2h, h2p, inter, periph) = self.tally.load();
        let (mut ops, mut writes) = (0, 0);
        for a in self.pages.iter().flatten() {
            ops += a.op_count();
            writes += a.write_count();
        }
        TransferStats {
            pim_to_host_bits: p2h,
            host_to_pim_bits: h2p,
            inter_array_bits: inter,
            pim_col_ops: ops,
            cell_writes: writes,
            periph_row_reads: periph,
            host_baseline_bits: 0,
        }
    }

    pub fn scratch_alloc(&mut self, slot: usize, n_bits: usize) -> Result<SlotRange, LayoutError> {
        let r = self.pools[slot].alloc(n_bits)?;
        Ok(SlotRange { slot, range: r })
    }

    pub fn scratch_free(&mut self, r: SlotRange) -> Result<(), LayoutError> {
        self.pools[r.slot].free(r.range)
    }

    pub fn scratch_free_columns(&self, slot: usize) -> usize {
        self.pools[slot].free_columns()
    }

    pub fn read_row(&self, page: usize, slot: usize, row: usize) -> Result<Vec<bool>, LayoutError> {
        let bits = self.pages[page][slot].read_row(row)?;
        self.tally.add_pim_to_host(bits.len() as u64);
        Ok(bits)
    }

    pub fn read_col(&self, page: usize, slot: usize, col: usize) -> Result<Vec<bool>, LayoutError> {
        let bits = self.pages[page][slot].read_col(col)?;
        self.tally.add_pim_to_host(bits.len() as u64);
        Ok(bits)
    }

    pub fn write_row(&mut self, page: usize, slot: usize, row: usize, bits: &[bool]) -> Result<(), LayoutError> {
        self.pages[page][slot].write_row(row, bits)?;
        self.tally.add_host_to_pim(bits.len() as u64);
        Ok(())
    }

    /// Reads one attribute value of one record; charged `width` bits.
    pub fn read_attr(&self, record: usize, attr: &str) -> Result<i64, LayoutError> {
        let loc = self.layout.locate(record, attr)?;
        let a = self.layout.attr(attr)?;
        let raw = self.pages[loc.page][loc.slot].read_field(loc.row, loc.cols.start, loc.cols.len)?;
        self.tally.add_pim_to_host(loc.cols.len as u64);
        Ok(a.spec.decode(raw as u64))
    }

    /// Reads a whole record; charged the sum of attribute widths.
    pub fn read_record(&self, record: usize) -> Result<Vec<i64>, LayoutError> {
        self.layout.schema.iter().map(|a| self.read_attr(record, &a.name)).collect()
    }

    /// Uncharged dump of every stored record, for inspection and tests only.
    pub fn inspect_records(&self) -> Vec<Vec<i64>> {
        let rpa = self.layout.rows_per_array;
        (0..self.layout.record_count)
            .map(|i| {
                self.layout
                    .attributes
                    .iter()
                    .map(|a| {
                        let raw = self.pages[i / rpa][a.slot]
                            .read_field(i % rpa, a.cols.start, a.cols.len)
                            .expect("layout in bounds");
                        a.spec.decode(raw as u64)
                    })
                    .collect()
            })
            .collect()
    }

    /// Uncharged view of a slot column across live records.
    pub fn inspect_col(&self, col: SlotRange) -> Vec<bool> {
        let rpa = self.layout.rows_per_array;
        (0..self.layout.record_count).map(|i| self.pages[i / rpa][col.slot].get(i % rpa, col.col(0))).collect()
    }
}
