//! Randomized relations and queries for property tests and benchmarks, and
//! the named SSB-lite query suite.
//!
//! Generated queries stay inside what the PIM compiler accepts: arithmetic
//! only over unsigned attributes and non-negative immediates with natural
//! width at most 64, and attribute-to-attribute comparisons only between
//! attributes of equal width and signedness.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::isa::{AggKind, ArithExpr, CmpOp, Operand, PredicateExpr};
use crate::queryparse::{AggregateSpec, QueryIR};
use crate::relation::{AttributeSpec, HostTable};

/// A named query of a benchmark suite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub name: String,
    pub query: String,
}

/// Random relation with a few low-cardinality grouping attributes
/// (`g0`, `g1`, ...) and value attributes of mixed widths and signedness.
pub fn random_table<R: Rng>(rng: &mut R, records: usize) -> HostTable {
    let mut schema = Vec::new();
    let n_groups = rng.gen_range(1..=3);
    for i in 0..n_groups {
        schema.push(AttributeSpec::unsigned(format!("g{i}"), rng.gen_range(1..=3)));
    }
    let n_vals = rng.gen_range(2..=5);
    for i in 0..n_vals {
        let width = *[4u32, 8, 8, 12, 16, 32].choose(rng).expect("non-empty");
        let spec = if rng.gen_bool(0.25) {
            AttributeSpec::signed(format!("v{i}"), width)
        } else {
            AttributeSpec::unsigned(format!("v{i}"), width)
        };
        schema.push(spec);
    }
    let mut t = HostTable::new("t", schema);
    for _ in 0..records {
        let row = t
            .schema
            .iter()
            .map(|a| {
                let lo = a.min_value() as i64;
                let hi = a.max_value() as i64;
                // Skew toward small values so arithmetic sums stay interesting.
                if rng.gen_bool(0.3) {
                    rng.gen_range(lo..=hi.min(lo + 15))
                } else {
                    rng.gen_range(lo..=hi)
                }
            })
            .collect();
        t.rows.push(row);
    }
    t
}

/// Natural width of an unsigned expression, mirroring the compiler's rule.
pub fn natural_width(e: &ArithExpr, schema: &[AttributeSpec]) -> Option<u32> {
    Some(match e {
        ArithExpr::Attr(a) => {
            let s = schema.iter().find(|s| &s.name == a)?;
            if s.signed {
                return None;
            }
            s.width
        }
        ArithExpr::Imm(v) if *v < 0 => return None,
        ArithExpr::Imm(v) => (64 - (*v as u64).leading_zeros()).max(1),
        ArithExpr::Add(a, b) => natural_width(a, schema)?.max(natural_width(b, schema)?) + 1,
        ArithExpr::Mul(a, b) => natural_width(a, schema)? + natural_width(b, schema)?,
    })
}

fn random_imm<R: Rng>(rng: &mut R, spec: &AttributeSpec) -> i64 {
    let lo = spec.min_value() as i64;
    let hi = spec.max_value().min(i64::MAX as i128) as i64;
    match rng.gen_range(0..10) {
        0 => lo.saturating_sub(rng.gen_range(1..100)),
        1 => hi.saturating_add(rng.gen_range(1..100)),
        2 => lo,
        3 => hi,
        _ => rng.gen_range(lo..=hi),
    }
}

/// Random predicate tree of depth at most `depth` (a comparison is depth 1).
pub fn random_predicate<R: Rng>(rng: &mut R, schema: &[AttributeSpec], depth: usize) -> PredicateExpr {
    if depth <= 1 || rng.gen_bool(0.3) {
        let a = schema.choose(rng).expect("non-empty schema");
        let op = *CmpOp::ALL.choose(rng).expect("non-empty");
        let peers: Vec<&AttributeSpec> =
            schema.iter().filter(|b| b.width == a.width && b.signed == a.signed).collect();
        let rhs = if rng.gen_bool(0.3) {
            Operand::Attr(peers.choose(rng).expect("self is a peer").name.clone())
        } else {
            Operand::Imm(random_imm(rng, a))
        };
        return PredicateExpr::cmp(a.name.clone(), op, rhs);
    }
    match rng.gen_range(0..3) {
        0 => random_predicate(rng, schema, depth - 1).and(random_predicate(rng, schema, depth - 1)),
        1 => random_predicate(rng, schema, depth - 1).or(random_predicate(rng, schema, depth - 1)),
        _ => random_predicate(rng, schema, depth - 1).not(),
    }
}

/// Random unsigned arithmetic expression with natural width at most 64.
pub fn random_arith<R: Rng>(rng: &mut R, schema: &[AttributeSpec], depth: usize) -> Option<ArithExpr> {
    let unsigned: Vec<&AttributeSpec> = schema.iter().filter(|a| !a.signed).collect();
    if unsigned.is_empty() {
        return None;
    }
    for _ in 0..16 {
        let e = arith_tree(rng, &unsigned, depth);
        if natural_width(&e, schema).is_some_and(|w| w <= 64) {
            return Some(e);
        }
    }
    Some(ArithExpr::attr(unsigned[0].name.clone()))
}

fn arith_tree<R: Rng>(rng: &mut R, attrs: &[&AttributeSpec], depth: usize) -> ArithExpr {
    if depth <= 1 || rng.gen_bool(0.4) {
        return if rng.gen_bool(0.8) {
            ArithExpr::attr(attrs.choose(rng).expect("non-empty").name.clone())
        } else {
            ArithExpr::Imm(rng.gen_range(0..200))
        };
    }
    let a = arith_tree(rng, attrs, depth - 1);
    let b = arith_tree(rng, attrs, depth - 1);
    if rng.gen_bool(0.5) {
        a.add(b)
    } else {
        a.mul(b)
    }
}

/// Random aggregate query over `schema`; grouping attributes are drawn from
/// `group_candidates`.
pub fn random_query<R: Rng>(
    rng: &mut R,
    schema: &[AttributeSpec],
    group_candidates: &[String],
    max_aggs: usize,
    max_depth: usize,
    max_group: usize,
) -> QueryIR {
    let n = rng.gen_range(1..=max_aggs.max(1));
    let mut aggregates = Vec::with_capacity(n);
    for _ in 0..n {
        let kind = *[AggKind::Sum, AggKind::Min, AggKind::Max, AggKind::Count, AggKind::Avg]
            .choose(rng)
            .expect("non-empty");
        let expr = if kind == AggKind::Count && rng.gen_bool(0.5) {
            None
        } else if kind != AggKind::Avg && rng.gen_bool(0.3) {
            // Bare attribute, possibly signed.
            Some(ArithExpr::attr(schema.choose(rng).expect("non-empty").name.clone()))
        } else {
            random_arith(rng, schema, 3)
        };
        let expr = match (kind, expr) {
            (AggKind::Count, e) => e,
            (_, Some(e)) => Some(e),
            (_, None) => Some(ArithExpr::attr(schema[0].name.clone())),
        };
        aggregates.push(AggregateSpec { kind, expr });
    }
    let depth = rng.gen_range(1..=max_depth.max(1));
    let predicate = rng.gen_bool(0.85).then(|| random_predicate(rng, schema, depth));
    let mut group_by: Vec<String> = Vec::new();
    if !group_candidates.is_empty() && rng.gen_bool(0.6) {
        let k = rng.gen_range(1..=max_group.min(group_candidates.len()).max(1));
        group_by = group_candidates.choose_multiple(rng, k).cloned().collect();
    }
    QueryIR { aggregates, from: "t".into(), predicate, group_by }
}

fn entry(name: &str, query: &str) -> SuiteEntry {
    SuiteEntry { name: name.into(), query: query.into() }
}

/// SSB-style queries over the pre-joined `lineorder` relation.
pub fn ssb_suite() -> Vec<SuiteEntry> {
    vec![
        entry(
            "q1.1",
            "SELECT SUM(price * discount) FROM lineorder WHERE date.year = 1993 AND discount BETWEEN 1 AND 3 AND quantity < 25",
        ),
        entry(
            "q1.2",
            "SELECT SUM(price * discount) FROM lineorder WHERE date.year = 1994 AND date.month = 1 AND discount BETWEEN 4 AND 6 AND quantity BETWEEN 26 AND 35",
        ),
        entry(
            "q1.3",
            "SELECT SUM(price * discount) FROM lineorder WHERE date.year = 1994 AND date.quarter = 2 AND discount BETWEEN 5 AND 7 AND quantity BETWEEN 26 AND 35",
        ),
        entry(
            "q2.1",
            "SELECT SUM(revenue) FROM lineorder WHERE part.category = 12 AND supplier.region = 1 GROUP BY date.year",
        ),
        entry(
            "q2.2",
            "SELECT SUM(revenue), COUNT(*) FROM lineorder WHERE part.mfgr = 2 AND supplier.region = 3 GROUP BY date.year, part.mfgr",
        ),
        entry(
            "q3.1",
            "SELECT SUM(revenue) FROM lineorder WHERE customer.region = 2 AND supplier.region = 2 AND date.year BETWEEN 1992 AND 1997 GROUP BY customer.region, date.year",
        ),
        entry(
            "q4.1",
            "SELECT SUM(profit) FROM lineorder WHERE customer.region = 1 AND supplier.region = 1 AND (part.mfgr = 1 OR part.mfgr = 2) GROUP BY date.year",
        ),
        entry(
            "q5.1",
            "SELECT MIN(supplycost), MAX(revenue), AVG(quantity) FROM lineorder WHERE tax <= 4 AND part.size > 25",
        ),
        entry("q5.2", "SELECT COUNT(*), AVG(discount) FROM lineorder WHERE NOT (customer.nation = supplier.nation)"),
    ]
}
