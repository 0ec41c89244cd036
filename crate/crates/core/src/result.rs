//! Query results shared by the PIM engine and the host oracle.

use std::fmt;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

/// One aggregate value of a result row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AggValue {
    Int(i128),
    /// Exact quotient `sum / count` plus its double-precision value.
    Avg { sum: i128, count: i128, value: f64 },
    /// Aggregate over an empty selection.
    Null,
}

impl AggValue {
    /// AVG from exact parts; a zero count yields `Null`.
    pub fn avg(sum: i128, count: i128) -> AggValue {
        if count == 0 {
            AggValue::Null
        } else {
            AggValue::Avg { sum, count, value: sum as f64 / count as f64 }
        }
    }

    pub fn as_int(&self) -> Option<i128> {
        match self {
            AggValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AggValue::Int(v) => Some(*v as f64),
            AggValue::Avg { value, .. } => Some(*value),
            AggValue::Null => None,
        }
    }

    /// Integers and AVG numerator/denominator pairs must match exactly;
    /// AVG quotients within `rel_tol` relative error.
    pub fn matches(&self, other: &AggValue, rel_tol: f64) -> bool {
        match (self, other) {
            (AggValue::Int(a), AggValue::Int(b)) => a == b,
            (AggValue::Null, AggValue::Null) => true,
            (AggValue::Avg { sum: s1, count: c1, value: v1 }, AggValue::Avg { sum: s2, count: c2, value: v2 }) => {
                s1 * c2 == s2 * c1 && ((v1 - v2).abs() <= rel_tol * v1.abs().max(v2.abs()) || v1 == v2)
            }
            _ => false,
        }
    }
}

impl fmt::Display for AggValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggValue::Int(v) => write!(f, "{v}"),
            AggValue::Avg { value, .. } => write!(f, "{value}"),
            AggValue::Null => f.write_str("NULL"),
        }
    }
}

impl Serialize for AggValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AggValue::Int(v) => match i64::try_from(*v) {
                Ok(x) => s.serialize_i64(x),
                Err(_) => s.serialize_str(&v.to_string()),
            },
            AggValue::Null => s.serialize_none(),
            AggValue::Avg { sum, count, value } => {
                let mut m = s.serialize_map(Some(3))?;
                m.serialize_entry("num", &sum.to_string())?;
                m.serialize_entry("den", &count.to_string())?;
                m.serialize_entry("value", value)?;
                m.end()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    /// Group-key values in `group_by` order; empty for non-grouped queries.
    pub key: Vec<i64>,
    pub values: Vec<AggValue>,
}

/// Rows ordered by group key; keys are unique.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub group_by: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    /// Same shape and keys, values equal under [`AggValue::matches`].
    pub fn matches(&self, other: &ResultTable, rel_tol: f64) -> bool {
        self.group_by == other.group_by
            && self.columns == other.columns
            && self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.key == b.key
                    && a.values.len() == b.values.len()
                    && a.values.iter().zip(&b.values).all(|(x, y)| x.matches(y, rel_tol))
            })
    }

    /// Plain-text table for terminals.
    pub fn pretty(&self) -> String {
        let header: Vec<String> = self.group_by.iter().chain(&self.columns).cloned().collect();
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.key.iter().map(|k| k.to_string()).chain(r.values.iter().map(|v| v.to_string())).collect())
            .collect();
        let mut widths: Vec<usize> = header.iter().map(String::len).collect();
        for row in &body {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: &[String]| {
            cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join(" | ")
        };
        let mut out = line(&header);
        out.push('\n');
        out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
        for row in &body {
            out.push('\n');
            out.push_str(&line(row));
        }
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn avg_is_exact_pair() {
        assert_eq!(AggValue::avg(10, 4), AggValue::Avg { sum: 10, count: 4, value: 2.5 });
        assert_eq!(AggValue::avg(3, 0), AggValue::Null);
        assert!(AggValue::avg(10, 4).matches(&AggValue::avg(5, 2), 1e-9));
        assert!(!AggValue::avg(10, 4).matches(&AggValue::avg(5, 3), 1e-9));
    }

    #[test]
    fn json_shapes() {
        assert_eq!(serde_json::to_string(&AggValue::Int(-3)).unwrap(), "-3");
        assert_eq!(serde_json::to_string(&AggValue::Null).unwrap(), "null");
        assert_eq!(serde_json::to_string(&AggValue::avg(5, 2)).unwrap(), r#"{"num":"5","den":"2","value":2.5}"#);
    }
}
