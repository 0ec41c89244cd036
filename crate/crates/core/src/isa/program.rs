//! Compiled PIM programs: per-page templates of column operations.

use std::fmt;

use crate::crossbar::ColOp;
use crate::layout::{RelationLayout, SlotRange};

use super::IsaError;

/// One instruction of a page template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    /// Column-wise logic op inside one array slot.
    Col { slot: usize, op: ColOp },
    /// Intra-array row shift (`dest[r] = src[r + offset]`), used by in-array reduction.
    Shift { slot: usize, src: usize, dest: usize, offset: usize, fill: bool },
    /// Host-mediated copy between the two arrays of a split page.
    Copy { from: SlotRange, to: SlotRange },
}

/// A sequence of steps replayed identically on every page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PimProgram {
    pub steps: Vec<Step>,
    /// Every scratch range the program touched, including freed temporaries.
    pub scratch_used: Vec<SlotRange>,
    /// Where the output lives (owned by the caller until released).
    pub result: SlotRange,
}

impl PimProgram {
    /// In-array operations per page (logic ops and row shifts).
    pub fn col_ops(&self) -> usize {
        self.steps.iter().filter(|s| !matches!(s, Step::Copy { .. })).count()
    }

    /// Bits moved between arrays per page per row.
    pub fn copy_width(&self) -> usize {
        self.steps
            .iter()
            .map(|s| match s {
                Step::Copy { from, .. } => from.len(),
                _ => 0,
            })
            .sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Checks every in-array column reference against the slot it runs in:
    /// it must fall inside an attribute placed in that slot or in that
    /// slot's scratch block.
    pub fn validate(&self, layout: &RelationLayout) -> Result<(), IsaError> {
        let owned = |slot: usize, col: usize| -> bool {
            slot < layout.slots()
                && (layout.scratch[slot].cols().contains(&col)
                    || layout.attributes.iter().any(|a| a.slot == slot && a.cols.cols().contains(&col)))
        };
        for (i, s) in self.steps.iter().enumerate() {
            let (slot, cols): (usize, Vec<usize>) = match s {
                Step::Col { slot, op } => (*slot, op.srcs.iter().copied().chain([op.dest]).collect()),
                Step::Shift { slot, src, dest, .. } => (*slot, vec![*src, *dest]),
                Step::Copy { from, to } => {
                    if from.slot == to.slot || from.len() != to.len() {
                        return Err(IsaError::BadCopy { step: i });
                    }
                    if from.range.cols().any(|c| !owned(from.slot, c)) || to.range.cols().any(|c| !owned(to.slot, c)) {
                        return Err(IsaError::ForeignColumn { step: i, slot: from.slot });
                    }
                    continue;
                }
            };
            if let Some(op) = match s {
                Step::Col { op, .. } => Some(op),
                _ => None,
            } {
                op.validate(layout.cols_per_array)?;
            }
            if cols.iter().any(|&c| !owned(slot, c)) {
                return Err(IsaError::ForeignColumn { step: i, slot });
            }
        }
        Ok(())
    }

    /// Textual assembly, one step per line (`AND c12 c40 -> c77`).
    /// Steps in slot 1 are prefixed with `@1`.
    pub fn to_asm(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Col { slot, op } => {
                if *slot != 0 {
                    write!(f, "@{slot} ")?;
                }
                write!(f, "{op}")
            }
            Step::Shift { slot, src, dest, offset, fill } => {
                if *slot != 0 {
                    write!(f, "@{slot} ")?;
                }
                write!(f, "SHIFT c{src} -> c{dest} +{offset} fill{}", u8::from(*fill))
            }
            Step::Copy { from, to } => write!(
                f,
                "XCOPY s{}:c{}..c{} -> s{}:c{}..c{}",
                from.slot,
                from.range.start,
                from.range.end(),
                to.slot,
                to.range.start,
                to.range.end()
            ),
        }
    }
}

impl fmt::Display for PimProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}
