//! Memory cell arrays that execute bitwise logic between whole columns.
//!
//! Bits are kept column-major, one `u64` word per 64 rows, so a column op
//! touches `ceil(rows / 64)` words regardless of the column count.

use std::fmt;

use arrayvec::ArrayVec;
use thiserror::Error;

/// Default crossbar geometry.
pub const DEFAULT_ROWS: usize = 1024;
pub const DEFAULT_COLS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CrossbarError {
    #[error("cell array dimensions must be positive (got {rows}x{cols})")]
    ZeroDimension { rows: usize, cols: usize },
    #[error("`{op}`: column {col} out of range (array has {cols} columns)")]
    ColumnOutOfRange { op: String, col: usize, cols: usize },
    #[error("`{op}`: expected {expected} source columns, got {got}")]
    Arity { op: String, expected: usize, got: usize },
    #[error("row {row} out of range (array has {rows} rows)")]
    RowOutOfRange { row: usize, rows: usize },
    #[error("row write of {got} bits into an array of {cols} columns")]
    RowWidth { got: usize, cols: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Not,
    And,
    Or,
    Nor,
    Xor,
    Copy,
    Set0,
    Set1,
}

impl OpKind {
    pub fn arity(self) -> usize {
        match self {
            OpKind::Set0 | OpKind::Set1 => 0,
            OpKind::Not | OpKind::Copy => 1,
            OpKind::And | OpKind::Or | OpKind::Nor | OpKind::Xor => 2,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            OpKind::Not => "NOT",
            OpKind::And => "AND",
            OpKind::Or => "OR",
            OpKind::Nor => "NOR",
            OpKind::Xor => "XOR",
            OpKind::Copy => "COPY",
            OpKind::Set0 => "SET0",
            OpKind::Set1 => "SET1",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Some(match s {
            "NOT" => OpKind::Not,
            "AND" => OpKind::And,
            "OR" => OpKind::Or,
            "NOR" => OpKind::Nor,
            "XOR" => OpKind::Xor,
            "COPY" => OpKind::Copy,
            "SET0" => OpKind::Set0,
            "SET1" => OpKind::Set1,
            _ => return None,
        })
    }

    /// Boolean function on packed words. Unused operands are ignored.
    #[inline]
    fn apply(self, a: u64, b: u64) -> u64 {
        match self {
            OpKind::Not => !a,
            OpKind::And => a & b,
            OpKind::Or => a | b,
            OpKind::Nor => !(a | b),
            OpKind::Xor => a ^ b,
            OpKind::Copy => a,
            OpKind::Set0 => 0,
            OpKind::Set1 => !0,
        }
    }
}

/// A single column-wise operation: `dest := kind(srcs...)` on every row at once.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColOp {
    pub kind: OpKind,
    pub srcs: ArrayVec<usize, 2>,
    pub dest: usize,
}

impl ColOp {
    pub fn new(kind: OpKind, srcs: &[usize], dest: usize) -> Self {
        let mut v = ArrayVec::new();
        for &s in srcs.iter().take(2) {
            v.push(s);
        }
        ColOp { kind, srcs: v, dest }
    }

    pub fn not(src: usize, dest: usize) -> Self {
        Self::new(OpKind::Not, &[src], dest)
    }
    pub fn copy(src: usize, dest: usize) -> Self {
        Self::new(OpKind::Copy, &[src], dest)
    }
    pub fn and(a: usize, b: usize, dest: usize) -> Self {
        Self::new(OpKind::And, &[a, b], dest)
    }
    pub fn or(a: usize, b: usize, dest: usize) -> Self {
        Self::new(OpKind::Or, &[a, b], dest)
    }
    pub fn nor(a: usize, b: usize, dest: usize) -> Self {
        Self::new(OpKind::Nor, &[a, b], dest)
    }
    pub fn xor(a: usize, b: usize, dest: usize) -> Self {
        Self::new(OpKind::Xor, &[a, b], dest)
    }
    pub fn set(value: bool, dest: usize) -> Self {
        Self::new(if value { OpKind::Set1 } else { OpKind::Set0 }, &[], dest)
    }

    /// Checks arity and column bounds against an array with `cols` columns.
    pub fn validate(&self, cols: usize) -> Result<(), CrossbarError> {
        if self.srcs.len() != self.kind.arity() {
            return Err(CrossbarError::Arity {
                op: self.to_string(),
                expected: self.kind.arity(),
                got: self.srcs.len(),
            });
        }
        for &c in self.srcs.iter().chain(std::iter::once(&self.dest)) {
            if c >= cols {
                return Err(CrossbarError::ColumnOutOfRange { op: self.to_string(), col: c, cols });
            }
        }
        Ok(())
    }
}

impl fmt::Display for ColOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.mnemonic())?;
        for s in &self.srcs {
            write!(f, " c{s}")?;
        }
        write!(f, " -> c{}", self.dest)
    }
}

/// A rows x cols bit matrix with column-wise logic and usage counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellArray {
    rows: usize,
    cols: usize,
    words: usize,
    bits: Vec<u64>,
    write_count: u64,
    op_count: u64,
}

impl CellArray {
    pub fn new(rows: usize, cols: usize) -> Result<Self, CrossbarError> {
        if rows == 0 || cols == 0 {
            return Err(CrossbarError::ZeroDimension { rows, cols });
        }
        let words = rows.div_ceil(64);
        Ok(CellArray { rows, cols, words, bits: vec![0; words * cols], write_count: 0, op_count: 0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Total cell writes so far.
    pub fn write_count(&self) -> u64 {
        self.write_count
    }

    /// Column ops (including row shifts) executed so far.
    pub fn op_count(&self) -> u64 {
        self.op_count
    }

    #[inline]
    fn tail_mask(&self) -> u64 {
        match self.rows % 64 {
            0 => !0,
            r => (1u64 << r) - 1,
        }
    }

    #[inline]
    fn col_slice(&self, col: usize) -> &[u64] {
        &self.bits[col * self.words..(col + 1) * self.words]
    }

    fn check_col(&self, col: usize, op: &str) -> Result<(), CrossbarError> {
        if col >= self.cols {
            return Err(CrossbarError::ColumnOutOfRange { op: op.to_string(), col, cols: self.cols });
        }
        Ok(())
    }

    fn check_row(&self, row: usize) -> Result<(), CrossbarError> {
        if row >= self.rows {
            return Err(CrossbarError::RowOutOfRange { row, rows: self.rows });
        }
        Ok(())
    }

    pub fn exec(&mut self, op: &ColOp) -> Result<(), CrossbarError> {
        op.validate(self.cols)?;
        let w = self.words;
        let a = op.srcs.first().copied().unwrap_or(0);
        let b = op.srcs.get(1).copied().unwrap_or(a);
        let d = op.dest;
        for i in 0..w {
            let x = self.bits[a * w + i];
            let y = self.bits[b * w + i];
            self.bits[d * w + i] = op.kind.apply(x, y);
        }
        let tail = self.tail_mask();
        self.bits[d * w + w - 1] &= tail;
        self.op_count += 1;
        self.write_count += self.rows as u64;
        Ok(())
    }

    /// Row-shifting column copy: `dest[r] = src[r + offset]`, or `fill` past the last row.
    ///
    /// This is the intra-array data movement used by in-array reduction trees;
    /// it counts as one op and a full-column write.
    pub fn shift_rows(&mut self, src: usize, dest: usize, offset: usize, fill: bool) -> Result<(), CrossbarError> {
        self.check_col(src, "SHIFT")?;
        self.check_col(dest, "SHIFT")?;
        let w = self.words;
        let source: Vec<u64> = self.col_slice(src).to_vec();
        let word_off = offset / 64;
        let bit_off = offset % 64;
        let get = |i: usize| -> u64 { source.get(i).copied().unwrap_or(0) };
        for i in 0..w {
            let lo = i + word_off;
            let v = if bit_off == 0 { get(lo) } else { (get(lo) >> bit_off) | (get(lo + 1) << (64 - bit_off)) };
            self.bits[dest * w + i] = v;
        }
        if fill {
            let start = self.rows.saturating_sub(offset);
            for r in start..self.rows {
                self.bits[dest * w + r / 64] |= 1 << (r % 64);
            }
        }
        let tail = self.tail_mask();
        self.bits[dest * w + w - 1] &= tail;
        self.op_count += 1;
        self.write_count += self.rows as u64;
        Ok(())
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        (self.bits[col * self.words + row / 64] >> (row % 64)) & 1 == 1
    }

    #[inline]
    fn put(&mut self, row: usize, col: usize, v: bool) {
        let idx = col * self.words + row / 64;
        let m = 1u64 << (row % 64);
        if v {
            self.bits[idx] |= m;
        } else {
            self.bits[idx] &= !m;
        }
    }

    pub fn write_row(&mut self, row: usize, bits: &[bool]) -> Result<(), CrossbarError> {
        self.check_row(row)?;
        if bits.len() != self.cols {
            return Err(CrossbarError::RowWidth { got: bits.len(), cols: self.cols });
        }
        for (c, &b) in bits.iter().enumerate() {
            self.put(row, c, b);
        }
        self.write_count += self.cols as u64;
        Ok(())
    }

    pub fn read_row(&self, row: usize) -> Result<Vec<bool>, CrossbarError> {
        self.check_row(row)?;
        Ok((0..self.cols).map(|c| self.get(row, c)).collect())
    }

    pub fn read_col(&self, col: usize) -> Result<Vec<bool>, CrossbarError> {
        self.check_col(col, "READ")?;
        Ok((0..self.rows).map(|r| self.get(r, col)).collect())
    }

    /// Packed column words, LSB = row 0.
    pub fn col_words(&self, col: usize) -> Result<&[u64], CrossbarError> {
        self.check_col(col, "READ")?;
        Ok(self.col_slice(col))
    }

    /// Reads `width` bits of one row starting at `start` as an LSB-first integer.
    pub fn read_field(&self, row: usize, start: usize, width: usize) -> Result<u128, CrossbarError> {
        self.check_row(row)?;
        if width > 0 {
            self.check_col(start + width - 1, "READ")?;
        }
        let mut v = 0u128;
        for i in 0..width {
            if self.get(row, start + i) {
                v |= 1 << i;
            }
        }
        Ok(v)
    }

    /// Writes the low `width` bits of `value` into one row starting at `start`.
    pub fn write_field(&mut self, row: usize, start: usize, width: usize, value: u128) -> Result<(), CrossbarError> {
        self.check_row(row)?;
        if width > 0 {
            self.check_col(start + width - 1, "WRITE")?;
        }
        for i in 0..width {
            self.put(row, start + i, (value >> i) & 1 == 1);
        }
        self.write_count += width as u64;
        Ok(())
    }

    /// Copies a whole column from packed words. Counts `rows` cell writes.
    pub fn write_col_words(&mut self, col: usize, words: &[u64]) -> Result<(), CrossbarError> {
        self.check_col(col, "WRITE")?;
        let w = self.words;
        let tail = self.tail_mask();
        for i in 0..w {
            self.bits[col * w + i] = words.get(i).copied().unwrap_or(0);
        }
        self.bits[col * w + w - 1] &= tail;
        self.write_count += self.rows as u64;
        Ok(())
    }
}
