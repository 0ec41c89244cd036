//! Host-only reference engine: full row scans with exact 128-bit
//! accumulators, plus the host-baseline transfer model.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::isa::{AggKind, ArithExpr, Operand, PredicateExpr};
use crate::queryparse::{AggregateSpec, QueryIR};
use crate::relation::{AttributeSpec, HostTable};
use crate::result::{AggValue, ResultRow, ResultTable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
}

/// Running state of one aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggState {
    pub kind: AggKind,
    pub count: i128,
    pub sum: i128,
    pub min: Option<i128>,
    pub max: Option<i128>,
}

impl AggState {
    pub fn new(kind: AggKind) -> Self {
        AggState { kind, count: 0, sum: 0, min: None, max: None }
    }

    pub fn update(&mut self, v: i128) {
        self.count += 1;
        self.sum += v;
        self.min = Some(self.min.map_or(v, |m| m.min(v)));
        self.max = Some(self.max.map_or(v, |m| m.max(v)));
    }

    pub fn finish(&self) -> AggValue {
        match self.kind {
            AggKind::Count => AggValue::Int(self.count),
            _ if self.count == 0 => AggValue::Null,
            AggKind::Sum => AggValue::Int(self.sum),
            AggKind::Min => AggValue::Int(self.min.unwrap_or_default()),
            AggKind::Max => AggValue::Int(self.max.unwrap_or_default()),
            AggKind::Avg => AggValue::avg(self.sum, self.count),
        }
    }
}

/// Resolves attribute names to row positions.
pub(crate) struct Resolver<'t> {
    schema: &'t [AttributeSpec],
}

impl<'t> Resolver<'t> {
    pub(crate) fn new(schema: &'t [AttributeSpec]) -> Self {
        Resolver { schema }
    }

    pub(crate) fn index(&self, name: &str) -> Result<usize, OracleError> {
        self.schema.iter().position(|a| a.name == name).ok_or_else(|| OracleError::UnknownAttribute(name.to_string()))
    }

    pub(crate) fn check(&self, ir: &QueryIR) -> Result<(), OracleError> {
        ir.referenced_attrs().iter().try_for_each(|a| self.index(a).map(|_| ()))
    }
}

/// Evaluates `e` exactly, or modulo `2^wrap` when given.
pub fn eval_arith(e: &ArithExpr, value: &dyn Fn(&str) -> i64, wrap: Option<u32>) -> i128 {
    let v = match e {
        ArithExpr::Attr(a) => value(a) as i128,
        ArithExpr::Imm(v) => *v as i128,
        ArithExpr::Add(a, b) => eval_arith(a, value, wrap) + eval_arith(b, value, wrap),
        ArithExpr::Mul(a, b) => eval_arith(a, value, wrap).wrapping_mul(eval_arith(b, value, wrap)),
    };
    match wrap {
        Some(w) if w < 127 => v.rem_euclid(1i128 << w),
        _ => v,
    }
}

pub fn eval_predicate(p: &PredicateExpr, value: &dyn Fn(&str) -> i64) -> bool {
    match p {
        PredicateExpr::Cmp { attr, op, rhs } => {
            let b = match rhs {
                Operand::Attr(x) => value(x),
                Operand::Imm(v) => *v,
            };
            op.holds(value(attr), b)
        }
        PredicateExpr::And(a, b) => eval_predicate(a, value) && eval_predicate(b, value),
        PredicateExpr::Or(a, b) => eval_predicate(a, value) || eval_predicate(b, value),
        PredicateExpr::Not(a) => !eval_predicate(a, value),
    }
}

/// Value fed to an aggregate for one record (COUNT(*) counts with 1).
pub fn agg_input(agg: &AggregateSpec, value: &dyn Fn(&str) -> i64) -> i128 {
    agg.expr.as_ref().map_or(1, |e| eval_arith(e, value, None))
}

/// Bits a scan engine pulls from memory: `rows × Σ widths` over every
/// attribute the query references.
pub fn baseline_bits(ir: &QueryIR, schema: &[AttributeSpec], rows: usize) -> Result<u64, OracleError> {
    let r = Resolver::new(schema);
    let mut bits = 0u64;
    for a in ir.referenced_attrs() {
        bits += schema[r.index(&a)?].width as u64;
    }
    Ok(bits * rows as u64)
}

/// Shapes grouped states into a result table. Non-grouped queries always
/// produce exactly one row.
pub fn build_table(ir: &QueryIR, groups: BTreeMap<Vec<i64>, Vec<AggState>>) -> ResultTable {
    let mut rows: Vec<ResultRow> =
        groups.into_iter().map(|(key, st)| ResultRow { key, values: st.iter().map(AggState::finish).collect() }).collect();
    if ir.group_by.is_empty() && rows.is_empty() {
        let st: Vec<AggState> = ir.aggregates.iter().map(|a| AggState::new(a.kind)).collect();
        rows.push(ResultRow { key: vec![], values: st.iter().map(AggState::finish).collect() });
    }
    ResultTable {
        group_by: ir.group_by.clone(),
        columns: ir.aggregates.iter().map(AggregateSpec::label).collect(),
        rows,
    }
}

/// Full-scan execution. Returns the result and the host-baseline bits.
pub fn execute_host(ir: &QueryIR, table: &HostTable) -> Result<(ResultTable, u64), OracleError> {
    let r = Resolver::new(&table.schema);
    r.check(ir)?;
    let idx: BTreeMap<&str, usize> = table.schema.iter().enumerate().map(|(i, a)| (a.name.as_str(), i)).collect();
    let mut groups: BTreeMap<Vec<i64>, Vec<AggState>> = BTreeMap::new();
    for row in &table.rows {
        let value = |n: &str| row[idx[n]];
        if let Some(p) = &ir.predicate {
            if !eval_predicate(p, &value) {
                continue;
            }
        }
        let key: Vec<i64> = ir.group_by.iter().map(|g| value(g)).collect();
        let st = groups.entry(key).or_insert_with(|| ir.aggregates.iter().map(|a| AggState::new(a.kind)).collect());
        for (s, a) in st.iter_mut().zip(&ir.aggregates) {
            s.update(agg_input(a, &value));
        }
    }
    let baseline = baseline_bits(ir, &table.schema, table.rows.len())?;
    Ok((build_table(ir, groups), baseline))
}

/// Independent second implementation: collect distinct group keys, then
/// re-scan the table once per group.
pub fn execute_naive(ir: &QueryIR, table: &HostTable) -> Result<ResultTable, OracleError> {
    let r = Resolver::new(&table.schema);
    r.check(ir)?;
    let gi: Vec<usize> = ir.group_by.iter().map(|g| r.index(g)).collect::<Result<_, _>>()?;
    let get = |row: &Vec<i64>, n: &str| row[r.index(n).expect("checked")];
    let selected = |row: &Vec<i64>| ir.predicate.as_ref().map_or(true, |p| eval_predicate(p, &|n| get(row, n)));
    let mut keys: Vec<Vec<i64>> =
        table.rows.iter().filter(|row| selected(row)).map(|row| gi.iter().map(|&i| row[i]).collect()).collect();
    keys.sort();
    keys.dedup();
    if ir.group_by.is_empty() {
        keys = vec![vec![]];
    }
    let mut rows = Vec::new();
    for key in keys {
        let mut values = Vec::new();
        for a in &ir.aggregates {
            let inputs: Vec<i128> = table
                .rows
                .iter()
                .filter(|row| selected(row) && gi.iter().map(|&i| row[i]).eq(key.iter().copied()))
                .map(|row| agg_input(a, &|n| get(row, n)))
                .collect();
            let n = inputs.len() as i128;
            values.push(match a.kind {
                AggKind::Count => AggValue::Int(n),
                _ if n == 0 => AggValue::Null,
                AggKind::Sum => AggValue::Int(inputs.iter().sum()),
                AggKind::Min => AggValue::Int(*inputs.iter().min().expect("non-empty")),
                AggKind::Max => AggValue::Int(*inputs.iter().max().expect("non-empty")),
                AggKind::Avg => AggValue::avg(inputs.iter().sum(), n),
            });
        }
        rows.push(ResultRow { key, values });
    }
    Ok(ResultTable { group_by: ir.group_by.clone(), columns: ir.aggregates.iter().map(AggregateSpec::label).collect(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queryparse::parse_query;

    fn fixture() -> HostTable {
        let mut t = HostTable::new("f", vec![AttributeSpec::unsigned("a", 8), AttributeSpec::unsigned("g", 4)]);
        t.rows = vec![vec![10, 1], vec![20, 2], vec![30, 1], vec![40, 3]];
        t
    }

    #[test]
    fn sum_over_fixture() {
        let (r, bits) = execute_host(&parse_query("SELECT SUM(a), AVG(a) FROM f").unwrap(), &fixture()).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].values[0], AggValue::Int(100));
        assert_eq!(r.rows[0].values[1], AggValue::avg(100, 4));
        assert_eq!(bits, 4 * 8);
    }

    #[test]
    fn empty_selection_policy() {
        let q = parse_query("SELECT SUM(a), COUNT(*) FROM f WHERE a > 200").unwrap();
        let (r, _) = execute_host(&q, &fixture()).unwrap();
        assert_eq!(r.rows, vec![ResultRow { key: vec![], values: vec![AggValue::Null, AggValue::Int(0)] }]);
        let q = parse_query("SELECT SUM(a) FROM f WHERE a > 200 GROUP BY g").unwrap();
        assert!(execute_host(&q, &fixture()).unwrap().0.rows.is_empty());
    }

    #[test]
    fn baseline_definition() {
        let mut t = HostTable::new("f", vec![AttributeSpec::unsigned("a", 8), AttributeSpec::unsigned("b", 32)]);
        t.rows = vec![vec![1, 2]; 1000];
        let (_, bits) = execute_host(&parse_query("SELECT COUNT(*) FROM f WHERE a = 1").unwrap(), &t).unwrap();
        assert_eq!(bits, 8000);
    }

    #[test]
    fn grouped_matches_naive() {
        let q = parse_query("SELECT SUM(a), MIN(a), MAX(a * 2), COUNT(*) FROM f WHERE a <> 20 GROUP BY g").unwrap();
        let (r, _) = execute_host(&q, &fixture()).unwrap();
        assert_eq!(r, execute_naive(&q, &fixture()).unwrap());
        assert_eq!(r.rows.iter().map(|r| r.key[0]).collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(r.rows[0].values, vec![AggValue::Int(40), AggValue::Int(10), AggValue::Int(60), AggValue::Int(2)]);
    }

    #[test]
    fn wrap_mode() {
        let e = ArithExpr::attr("a").add(ArithExpr::attr("a"));
        assert_eq!(eval_arith(&e, &|_| 200, Some(8)), 144);
        assert_eq!(eval_arith(&e, &|_| 200, None), 400);
    }
}
