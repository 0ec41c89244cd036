//! Program execution over PIM memory and the host side of aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossbar::{CellArray, CrossbarError};
use crate::layout::{PimMemory, SlotRange};
use crate::relation::decode_bits;
use crate::stats::Tally;

use super::compile::{sum_width, Compiler, MaskedSource};
use super::expr::{AggKind, ArithExpr, PredicateExpr};
use super::program::{PimProgram, Step};
use super::IsaError;

/// Pages a program is replayed on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pages {
    All,
    Subset(Vec<usize>),
}

/// How per-array partial aggregates are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Circuit {
    /// Reduction tree of compiled column ops inside the array.
    #[default]
    PurePim,
    /// Row-sequential accumulator in the array periphery.
    Peripheral,
}

/// One partial aggregate per page, stored at row 0 of `range`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partials {
    pub kind: AggKind,
    pub range: SlotRange,
    pub signed: bool,
    pub biased: bool,
    pub source_width: u32,
    pub pages: Vec<usize>,
}

/// Outcome of a host-side fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Folded {
    Value(i128),
    /// MIN/MAX over zero arrays.
    Empty,
}

/// Compiles a filter; the result column stays allocated until released.
pub fn compile_predicate(memory: &mut PimMemory, pred: Option<&PredicateExpr>) -> Result<PimProgram, IsaError> {
    let mut c = Compiler::new(memory);
    let r = c.predicate(pred)?;
    Ok(c.finish(r))
}

/// Compiles an unsigned arithmetic expression, wrapping at `declared` bits.
pub fn compile_arith(memory: &mut PimMemory, expr: &ArithExpr, declared: Option<u32>) -> Result<PimProgram, IsaError> {
    let mut c = Compiler::new(memory);
    let r = c.arith(expr, declared)?;
    Ok(c.finish(r))
}

fn run_steps(arrays: &mut [CellArray], steps: &[Step], tally: &Tally) -> Result<(), CrossbarError> {
    for s in steps {
        match s {
            Step::Col { slot, op } => arrays[*slot].exec(op)?,
            Step::Shift { slot, src, dest, offset, fill } => arrays[*slot].shift_rows(*src, *dest, *offset, *fill)?,
            Step::Copy { from, to } => {
                let rows = arrays[from.slot].rows();
                for i in 0..from.len() {
                    let words = arrays[from.slot].col_words(from.col(i))?.to_vec();
                    arrays[to.slot].write_col_words(to.col(i), &words)?;
                }
                tally.add_inter_array(2 * rows as u64 * from.len() as u64);
            }
        }
    }
    Ok(())
}

/// Replays `program` on the selected pages, in parallel across pages.
pub fn exec_program(memory: &mut PimMemory, program: &PimProgram, pages: &Pages) -> Result<(), IsaError> {
    program.validate(&memory.layout)?;
    let selected: Option<Vec<bool>> = match pages {
        Pages::All => None,
        Pages::Subset(list) => {
            let mut sel = vec![false; memory.pages.len()];
            for &p in list {
                if p < sel.len() {
                    sel[p] = true;
                }
            }
            Some(sel)
        }
    };
    let tally = &memory.tally;
    memory
        .pages
        .par_iter_mut()
        .enumerate()
        .filter(|(i, _)| selected.as_ref().map_or(true, |s| s[*i]))
        .try_for_each(|(_, arrays)| run_steps(arrays, &program.steps, tally))?;
    Ok(())
}

/// Reads a one-bit-per-record result column; charged one bit per record.
pub fn read_filter_bits(memory: &PimMemory, col: SlotRange) -> Vec<bool> {
    memory.tally.add_pim_to_host(memory.record_count() as u64);
    memory.inspect_col(col)
}

/// Returns a scratch range to its pool.
pub fn release(memory: &mut PimMemory, r: SlotRange) -> Result<(), IsaError> {
    Ok(memory.scratch_free(r)?)
}

/// Nullifies non-selected rows of `source` into fresh scratch columns.
/// The source columns are not modified.
pub fn mask_attribute(
    memory: &mut PimMemory,
    source: SlotRange,
    signed: bool,
    mask: SlotRange,
    kind: AggKind,
) -> Result<MaskedSource, IsaError> {
    let mut c = Compiler::new(memory);
    let m = c.mask(source, signed, mask, kind)?;
    let program = c.finish(m.range);
    if let Err(e) = exec_program(memory, &program, &Pages::All) {
        let _ = memory.scratch_free(m.range);
        return Err(e);
    }
    Ok(m)
}

/// Reduces masked columns to one partial per page, left at row 0 of the
/// returned range.
pub fn pim_aggregate(memory: &mut PimMemory, masked: &MaskedSource, circuit: Circuit) -> Result<Partials, IsaError> {
    if masked.kind == AggKind::Avg {
        return Err(IsaError::Unsupported("AVG must be composed from SUM and COUNT".into()));
    }
    let rows = memory.rows_per_array();
    let range = match circuit {
        Circuit::PurePim => {
            let mut c = Compiler::new(memory);
            let r = c.reduction_tree(masked, rows)?;
            let program = c.finish(r);
            if let Err(e) = exec_program(memory, &program, &Pages::All) {
                let _ = memory.scratch_free(r);
                return Err(e);
            }
            r
        }
        Circuit::Peripheral => peripheral(memory, masked)?,
    };
    Ok(Partials {
        kind: masked.kind,
        range,
        signed: masked.signed,
        biased: masked.biased,
        source_width: masked.width(),
        pages: (0..memory.page_count()).collect(),
    })
}

fn low_mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

fn peripheral(memory: &mut PimMemory, m: &MaskedSource) -> Result<SlotRange, IsaError> {
    let w = m.width();
    let rows = memory.rows_per_array();
    let is_sum = matches!(m.kind, AggKind::Sum | AggKind::Count);
    let r = if is_sum { sum_width(w, rows) } else { w };
    let out = memory.scratch_alloc(m.range.slot, r as usize)?;
    let tally = &memory.tally;
    let res = memory.pages.par_iter_mut().try_for_each(|arrays| -> Result<(), CrossbarError> {
        let a = &mut arrays[m.range.slot];
        let mut acc: Option<u128> = None;
        let mut sum: i128 = 0;
        for row in 0..rows {
            let v = a.read_field(row, m.range.range.start, w as usize)?;
            if is_sum {
                sum += decode_bits(v, w, m.signed);
            } else {
                acc = Some(match (acc, m.kind) {
                    (None, _) => v,
                    (Some(x), AggKind::Min) => x.min(v),
                    (Some(x), _) => x.max(v),
                });
            }
        }
        tally.add_periph_rows(rows as u64);
        let value = if is_sum { sum as u128 & low_mask(r) } else { acc.unwrap_or(0) };
        a.write_field(0, out.range.start, r as usize, value)
    });
    if let Err(e) = res {
        let _ = memory.scratch_free(out);
        return Err(e.into());
    }
    Ok(out)
}

/// Reads each page's partial (charged `width × pages` bits) and folds them.
pub fn host_fold(memory: &PimMemory, partials: &Partials) -> Result<Folded, IsaError> {
    let r = partials.range.len();
    let mut values = Vec::with_capacity(partials.pages.len());
    for &p in &partials.pages {
        let raw = memory.pages[p][partials.range.slot].read_field(0, partials.range.range.start, r)?;
        memory.tally.add_pim_to_host(r as u64);
        let v = match partials.kind {
            AggKind::Min | AggKind::Max if partials.biased => {
                let w = partials.source_width;
                decode_bits(raw ^ (1u128 << (w - 1)), w, true)
            }
            AggKind::Sum => decode_bits(raw, r as u32, partials.signed),
            _ => decode_bits(raw, r as u32, false),
        };
        values.push(v);
    }
    Ok(fold_values(partials.kind, &values))
}

/// Host-side fold of already decoded partials.
pub fn fold_values(kind: AggKind, values: &[i128]) -> Folded {
    match kind {
        AggKind::Sum | AggKind::Count | AggKind::Avg => Folded::Value(values.iter().sum()),
        AggKind::Min => values.iter().copied().min().map_or(Folded::Empty, Folded::Value),
        AggKind::Max => values.iter().copied().max().map_or(Folded::Empty, Folded::Value),
    }
}

/// `attr := mask ? value : attr` on every page, with no host reads.
pub fn mux_update(memory: &mut PimMemory, attr: &str, mask: SlotRange, value: i64) -> Result<(), IsaError> {
    let mut c = Compiler::new(memory);
    let r = c.mux(attr, mask, value)?;
    let program = c.finish(r);
    exec_program(memory, &program, &Pages::All)
}

/// Host-mediated copy between the two arrays of one page; charged
/// `2 × rows × width` bits.
pub fn inter_array_copy(memory: &mut PimMemory, from: SlotRange, to: SlotRange, page: usize) -> Result<(), IsaError> {
    if memory.layout.slots() < 2 {
        return Err(IsaError::NotSplit);
    }
    let program = PimProgram { steps: vec![Step::Copy { from, to }], scratch_used: vec![], result: to };
    exec_program(memory, &program, &Pages::Subset(vec![page]))
}
