//! Recursive-descent parser for the supported SQL subset.
//!
//! ```text
//! query  := SELECT agg (',' agg)* FROM ident [WHERE pred] [GROUP BY ident (',' ident)*]
//! agg    := (SUM|MIN|MAX|COUNT|AVG) '(' arith ')' | COUNT '(' '*' ')'
//! arith  := term ('+' term)*
//! term   := factor ('*' factor)*
//! factor := ident | integer | '(' arith ')'
//! pred   := conj (OR conj)*
//! conj   := unary (AND unary)*
//! unary  := NOT unary | '(' pred ')' | ident op operand | ident BETWEEN operand AND operand
//! ```
//!
//! Keywords are case-insensitive. Identifiers may contain dots
//! (`part.category`) for pre-joined dimension attributes.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{AggKind, ArithExpr, CmpOp, Operand, PredicateExpr};

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: expected {expected}, found {found}\n{excerpt}")]
pub struct ParseError {
    pub offset: usize,
    pub expected: String,
    pub found: String,
    /// The source line containing `offset`, with a caret under it.
    pub excerpt: String,
}

/// One `SELECT` item. `expr` is `None` for `COUNT(*)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AggregateSpec {
    pub kind: AggKind,
    pub expr: Option<ArithExpr>,
}

impl AggregateSpec {
    /// Column label used in results (`SUM((a * b))`).
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for AggregateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.expr {
            Some(e) => write!(f, "{}({e})", self.kind.name()),
            None => write!(f, "{}(*)", self.kind.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryIR {
    pub aggregates: Vec<AggregateSpec>,
    pub from: String,
    /// `None` selects every record.
    pub predicate: Option<PredicateExpr>,
    pub group_by: Vec<String>,
}

impl QueryIR {
    /// Every attribute named anywhere in the query, deduplicated and sorted.
    pub fn referenced_attrs(&self) -> Vec<String> {
        let mut set = std::collections::BTreeSet::new();
        for a in &self.aggregates {
            if let Some(e) = &a.expr {
                e.attrs(&mut set);
            }
        }
        if let Some(p) = &self.predicate {
            p.attrs(&mut set);
        }
        set.extend(self.group_by.iter().cloned());
        set.into_iter().collect()
    }
}

impl fmt::Display for QueryIR {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        for (i, a) in self.aggregates.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, " FROM {}", self.from)?;
        if let Some(p) = &self.predicate {
            write!(f, " WHERE {p}")?;
        }
        if !self.group_by.is_empty() {
            write!(f, " GROUP BY {}", self.group_by.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    Sym(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(v) => format!("integer {v}"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }
}

const KEYWORDS: [&str; 14] =
    ["SELECT", "FROM", "WHERE", "GROUP", "BY", "AND", "OR", "NOT", "BETWEEN", "SUM", "MIN", "MAX", "COUNT", "AVG"];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(s))
}

fn excerpt(src: &str, offset: usize) -> String {
    let offset = offset.min(src.len());
    let start = src[..offset].rfind('\n').map_or(0, |i| i + 1);
    let end = src[offset..].find('\n').map_or(src.len(), |i| offset + i);
    let line = &src[start..end];
    let col = src[start..offset].chars().count();
    format!("{line}\n{}^", " ".repeat(col))
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |i: usize, expected: &str, found: String| ParseError {
        offset: i,
        expected: expected.into(),
        found,
        excerpt: excerpt(src, i),
    };
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let v = src[start..i].parse::<u64>().map_err(|_| err(start, "integer below 2^64", "overflowing literal".into()))?;
            out.push((start, Tok::Int(v)));
        } else {
            let two = src.get(i..i + 2);
            let sym = match two {
                Some("<=") => Some("<="),
                Some(">=") => Some(">="),
                Some("<>") => Some("<>"),
                _ => None,
            };
            if let Some(s) = sym {
                out.push((start, Tok::Sym(s)));
                i += 2;
                continue;
            }
            let s = match c {
                b'(' => "(",
                b')' => ")",
                b',' => ",",
                b'*' => "*",
                b'+' => "+",
                b'-' => "-",
                b'=' => "=",
                b'<' => "<",
                b'>' => ">",
                _ => {
                    let ch = src[i..].chars().next().unwrap_or('?');
                    return Err(err(i, "a token", format!("`{ch}`")));
                }
            };
            out.push((start, Tok::Sym(s)));
            i += 1;
        }
    }
    out.push((src.len(), Tok::Eof));
    Ok(out)
}

struct Parser<'s> {
    src: &'s str,
    toks: Vec<(usize, Tok)>,
    pos: usize,
    depth: usize,
}

impl<'s> Parser<'s> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ParseError {
        ParseError {
            offset: self.offset(),
            expected: expected.into(),
            found: self.peek().describe(),
            excerpt: excerpt(self.src, self.offset()),
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(x) if *x == s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.error(&format!("`{s}`")))
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek().is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(kw))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Ident(s) if !is_keyword(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.error("identifier")),
        }
    }

    fn integer(&mut self) -> Result<Option<i64>, ParseError> {
        let neg = matches!(self.peek(), Tok::Sym("-"));
        let save = self.pos;
        if neg {
            self.bump();
        }
        match self.peek() {
            Tok::Int(v) => {
                let v = *v;
                let value = if neg {
                    if v > 1u64 << 63 {
                        return Err(self.error("integer within 64-bit range"));
                    }
                    (v as i128).wrapping_neg() as i64
                } else {
                    i64::try_from(v).map_err(|_| self.error("integer within 64-bit range"))?
                };
                self.bump();
                Ok(Some(value))
            }
            _ if neg => Err(self.error("integer")),
            _ => {
                self.pos = save;
                Ok(None)
            }
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error("shallower nesting"));
        }
        Ok(())
    }

    fn query(&mut self) -> Result<QueryIR, ParseError> {
        self.expect_kw("SELECT")?;
        let mut aggregates = vec![self.aggregate()?];
        while self.eat_sym(",") {
            aggregates.push(self.aggregate()?);
        }
        self.expect_kw("FROM")?;
        let from = self.ident()?;
        let predicate = if self.eat_kw("WHERE") { Some(self.pred()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_kw("GROUP") {
            self.expect_kw("BY")?;
            group_by.push(self.ident()?);
            while self.eat_sym(",") {
                group_by.push(self.ident()?);
            }
        }
        if *self.peek() != Tok::Eof {
            return Err(self.error("end of input"));
        }
        Ok(QueryIR { aggregates, from, predicate, group_by })
    }

    fn aggregate(&mut self) -> Result<AggregateSpec, ParseError> {
        let kind = match self.peek() {
            t if t.is_kw("SUM") => AggKind::Sum,
            t if t.is_kw("MIN") => AggKind::Min,
            t if t.is_kw("MAX") => AggKind::Max,
            t if t.is_kw("COUNT") => AggKind::Count,
            t if t.is_kw("AVG") => AggKind::Avg,
            _ => return Err(self.error("aggregate (SUM, MIN, MAX, COUNT, AVG)")),
        };
        self.bump();
        self.expect_sym("(")?;
        if kind == AggKind::Count && self.eat_sym("*") {
            self.expect_sym(")")?;
            return Ok(AggregateSpec { kind, expr: None });
        }
        let e = self.arith()?;
        self.expect_sym(")")?;
        Ok(AggregateSpec { kind, expr: Some(e) })
    }

    fn arith(&mut self) -> Result<ArithExpr, ParseError> {
        self.enter()?;
        let mut e = self.term()?;
        while self.eat_sym("+") {
            e = e.add(self.term()?);
        }
        self.depth -= 1;
        Ok(e)
    }

    fn term(&mut self) -> Result<ArithExpr, ParseError> {
        let mut e = self.factor()?;
        while self.eat_sym("*") {
            e = e.mul(self.factor()?);
        }
        Ok(e)
    }

    fn factor(&mut self) -> Result<ArithExpr, ParseError> {
        if self.eat_sym("(") {
            let e = self.arith()?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        if let Some(v) = self.integer()? {
            return Ok(ArithExpr::Imm(v));
        }
        match self.ident() {
            Ok(name) => Ok(ArithExpr::Attr(name)),
            Err(_) => Err(self.error("identifier, integer or `(`")),
        }
    }

    fn pred(&mut self) -> Result<PredicateExpr, ParseError> {
        self.enter()?;
        let mut p = self.conj()?;
        while self.eat_kw("OR") {
            p = p.or(self.conj()?);
        }
        self.depth -= 1;
        Ok(p)
    }

    fn conj(&mut self) -> Result<PredicateExpr, ParseError> {
        let mut p = self.unary()?;
        while self.eat_kw("AND") {
            p = p.and(self.unary()?);
        }
        Ok(p)
    }

    fn unary(&mut self) -> Result<PredicateExpr, ParseError> {
        if self.eat_kw("NOT") {
            self.enter()?;
            let p = self.unary()?.not();
            self.depth -= 1;
            return Ok(p);
        }
        if self.eat_sym("(") {
            let p = self.pred()?;
            self.expect_sym(")")?;
            return Ok(p);
        }
        let attr = self.ident().map_err(|_| self.error("comparison, NOT or `(`"))?;
        if self.eat_kw("BETWEEN") {
            let lo = self.operand()?;
            self.expect_kw("AND")?;
            let hi = self.operand()?;
            return Ok(PredicateExpr::cmp(attr.clone(), CmpOp::Ge, lo).and(PredicateExpr::cmp(attr, CmpOp::Le, hi)));
        }
        let op = match self.peek() {
            Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym("<>") => CmpOp::Ne,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            _ => return Err(self.error("comparison operator")),
        };
        self.bump();
        let rhs = self.operand()?;
        Ok(PredicateExpr::cmp(attr, op, rhs))
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        if let Some(v) = self.integer()? {
            return Ok(Operand::Imm(v));
        }
        self.ident().map(Operand::Attr).map_err(|_| self.error("identifier or integer"))
    }
}

/// Parses one query.
pub fn parse_query(text: &str) -> Result<QueryIR, ParseError> {
    let toks = lex(text)?;
    Parser { src: text, toks, pos: 0, depth: 0 }.query()
}
