//! Functional simulator of a bulk-bitwise processing-in-memory module and an
//! analytical query engine on top of it.
//!
//! - [`crossbar`]: cell arrays executing column-wise logic ops
//! - [`layout`]: relation-to-array mapping and the host access facade
//! - [`isa`]: filter, arithmetic, masked aggregation and MUX update programs
//! - [`queryparse`]: SQL subset front end
//! - [`engine`]: planning, hybrid GROUP BY and execution
//! - [`schema`]: SSB-lite star generation, CSV loading and pre-join
//! - [`oracle`]: host-only reference engine
//! - [`workload`]: randomized relations and queries, SSB-lite suite

pub mod crossbar;
pub mod engine;
pub mod isa;
pub mod layout;
pub mod oracle;
pub mod queryparse;
pub mod relation;
pub mod result;
pub mod schema;
pub mod stats;
pub mod workload;

pub use crossbar::{CellArray, ColOp, CrossbarError, OpKind};
pub use engine::{CostParams, EngineConfig, EngineError, EngineMode, QueryOutcome, QueryPlan};
pub use isa::{AggKind, ArithExpr, Circuit, CmpOp, IsaError, Operand, PimProgram, PredicateExpr};
pub use layout::{plan_layout, store_records, ColRange, LayoutError, PimMemory, RelationLayout, SlotRange, Split};
pub use queryparse::{parse_query, AggregateSpec, ParseError, QueryIR};
pub use relation::{AttributeSpec, HostTable};
pub use result::{AggValue, ResultRow, ResultTable};
pub use schema::{StarSchema, SchemaError};
pub use stats::TransferStats;
