//! PIM primitives: filter, arithmetic, masked aggregation and MUX update,
//! compiled to column-op templates and replayed on every page.

mod compile;
mod exec;
mod expr;
mod program;

use thiserror::Error;

use crate::crossbar::CrossbarError;
use crate::layout::LayoutError;

pub use compile::{sum_width, Compiler, MaskedSource};
pub use exec::{
    compile_arith, compile_predicate, exec_program, fold_values, host_fold, inter_array_copy, mask_attribute,
    mux_update, pim_aggregate, read_filter_bits, release, Circuit, Folded, Pages, Partials,
};
pub use expr::{AggKind, ArithExpr, CmpOp, Operand, PredicateExpr};
pub use program::{PimProgram, Step};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsaError {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Crossbar(#[from] CrossbarError),
    #[error("cannot compare `{lhs}` ({lhs_width} bits) with `{rhs}` ({rhs_width} bits)")]
    WidthMismatch { lhs: String, rhs: String, lhs_width: u32, rhs_width: u32 },
    #[error("cannot compare signed and unsigned attributes `{lhs}` and `{rhs}`")]
    SignednessMismatch { lhs: String, rhs: String },
    #[error("arithmetic result width {width} exceeds 64 bits")]
    WidthOverflow { width: u32 },
    #[error("signed attribute `{0}` cannot be used in arithmetic")]
    SignedArithmetic(String),
    #[error("negative immediate {0} in arithmetic")]
    NegativeImmediate(i64),
    #[error("attribute `{attr}` is not stored in array slot {slot}")]
    CrossPartition { attr: String, slot: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("inter-array copy requires a split layout")]
    NotSplit,
    #[error("step {step}: copy must move equal widths between different slots")]
    BadCopy { step: usize },
    #[error("step {step}: column not owned by slot {slot}")]
    ForeignColumn { step: usize, slot: usize },
    #[error("value {value} does not fit attribute `{attr}`")]
    ImmediateOverflow { attr: String, value: i64 },
}
