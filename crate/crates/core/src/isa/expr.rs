//! Predicate and arithmetic expression trees over named attributes.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds<T: Ord>(self, a: T, b: T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Attr(String),
    Imm(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredicateExpr {
    Cmp { attr: String, op: CmpOp, rhs: Operand },
    And(Box<PredicateExpr>, Box<PredicateExpr>),
    Or(Box<PredicateExpr>, Box<PredicateExpr>),
    Not(Box<PredicateExpr>),
}

impl PredicateExpr {
    pub fn cmp(attr: impl Into<String>, op: CmpOp, rhs: Operand) -> Self {
        PredicateExpr::Cmp { attr: attr.into(), op, rhs }
    }

    pub fn cmp_imm(attr: impl Into<String>, op: CmpOp, v: i64) -> Self {
        Self::cmp(attr, op, Operand::Imm(v))
    }

    pub fn cmp_attr(attr: impl Into<String>, op: CmpOp, other: impl Into<String>) -> Self {
        Self::cmp(attr, op, Operand::Attr(other.into()))
    }

    pub fn and(self, other: PredicateExpr) -> Self {
        PredicateExpr::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: PredicateExpr) -> Self {
        PredicateExpr::Or(Box::new(self), Box::new(other))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        PredicateExpr::Not(Box::new(self))
    }

    pub fn attrs(&self, out: &mut BTreeSet<String>) {
        match self {
            PredicateExpr::Cmp { attr, rhs, .. } => {
                out.insert(attr.clone());
                if let Operand::Attr(b) = rhs {
                    out.insert(b.clone());
                }
            }
            PredicateExpr::And(a, b) | PredicateExpr::Or(a, b) => {
                a.attrs(out);
                b.attrs(out);
            }
            PredicateExpr::Not(a) => a.attrs(out),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            PredicateExpr::Cmp { .. } => 1,
            PredicateExpr::And(a, b) | PredicateExpr::Or(a, b) => 1 + a.depth().max(b.depth()),
            PredicateExpr::Not(a) => 1 + a.depth(),
        }
    }
}

impl fmt::Display for PredicateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredicateExpr::Cmp { attr, op, rhs } => {
                write!(f, "{attr} {} ", op.symbol())?;
                match rhs {
                    Operand::Attr(b) => write!(f, "{b}"),
                    Operand::Imm(v) => write!(f, "{v}"),
                }
            }
            PredicateExpr::And(a, b) => write!(f, "({a} AND {b})"),
            PredicateExpr::Or(a, b) => write!(f, "({a} OR {b})"),
            PredicateExpr::Not(a) => write!(f, "NOT ({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithExpr {
    Attr(String),
    Imm(i64),
    Add(Box<ArithExpr>, Box<ArithExpr>),
    Mul(Box<ArithExpr>, Box<ArithExpr>),
}

impl ArithExpr {
    pub fn attr(name: impl Into<String>) -> Self {
        ArithExpr::Attr(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: ArithExpr) -> Self {
        ArithExpr::Add(Box::new(self), Box::new(other))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, other: ArithExpr) -> Self {
        ArithExpr::Mul(Box::new(self), Box::new(other))
    }

    pub fn attrs(&self, out: &mut BTreeSet<String>) {
        match self {
            ArithExpr::Attr(a) => {
                out.insert(a.clone());
            }
            ArithExpr::Imm(_) => {}
            ArithExpr::Add(a, b) | ArithExpr::Mul(a, b) => {
                a.attrs(out);
                b.attrs(out);
            }
        }
    }
}

impl fmt::Display for ArithExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArithExpr::Attr(a) => f.write_str(a),
            ArithExpr::Imm(v) => write!(f, "{v}"),
            ArithExpr::Add(a, b) => write!(f, "({a} + {b})"),
            ArithExpr::Mul(a, b) => write!(f, "({a} * {b})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "UPPERCASE")]
pub enum AggKind {
    Sum,
    Min,
    Max,
    Count,
    Avg,
}

impl AggKind {
    pub fn name(self) -> &'static str {
        match self {
            AggKind::Sum => "SUM",
            AggKind::Min => "MIN",
            AggKind::Max => "MAX",
            AggKind::Count => "COUNT",
            AggKind::Avg => "AVG",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_is_fully_parenthesized() {
        let p = PredicateExpr::cmp_imm("a", CmpOp::Ge, 1).and(PredicateExpr::cmp_attr("a", CmpOp::Ne, "b").not());
        assert_eq!(p.to_string(), "(a >= 1 AND NOT (a <> b))");
        let e = ArithExpr::attr("x").mul(ArithExpr::Imm(3).add(ArithExpr::attr("y")));
        assert_eq!(e.to_string(), "(x * (3 + y))");
        let mut s = BTreeSet::new();
        p.attrs(&mut s);
        assert_eq!(s.into_iter().collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(p.depth(), 3);
    }
}
