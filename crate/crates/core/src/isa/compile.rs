//! Lowering of predicates, arithmetic, masking, reduction and MUX updates to
//! column-op templates.
//!
//! Circuits:
//! - equality: XOR per bit, OR-reduce, invert
//! - ordering: MSB-to-LSB scan keeping `lt` and `eq` chain bits; signed
//!   operands have their sign bit inverted (XOR bias) before the scan
//! - addition: ripple carry, O(w) ops
//! - multiplication: shift-and-add of AND-masked partial products, O(w^2) ops
//!
//! Immediates are materialized bit by bit with SET0/SET1 into a scratch
//! column, so a compiled comparison has the same length for every value.

use crate::crossbar::ColOp;
use crate::layout::{PimMemory, RelationLayout, ScratchPool, SlotRange};
use crate::relation::AttributeSpec;

use super::expr::{AggKind, ArithExpr, CmpOp, Operand, PredicateExpr};
use super::program::{PimProgram, Step};
use super::IsaError;

/// A masked copy of an aggregation source, ready for reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskedSource {
    pub range: SlotRange,
    pub kind: AggKind,
    /// Two's-complement source (affects SUM sign extension).
    pub signed: bool,
    /// Sign bit inverted so that unsigned MIN/MAX order matches signed order.
    pub biased: bool,
}

impl MaskedSource {
    pub fn width(&self) -> u32 {
        self.range.len() as u32
    }
}

/// Bits needed to hold the sum of `rows` values of `width` bits.
pub fn sum_width(width: u32, rows: usize) -> u32 {
    let extra = rows.next_power_of_two().trailing_zeros();
    (width + extra).min(128)
}

/// Right-hand side of a comparison circuit.
#[derive(Debug, Clone, Copy)]
enum Rhs<'r> {
    Cols(&'r [usize]),
    Imm(u64),
}

pub struct Compiler<'a> {
    layout: &'a RelationLayout,
    pools: &'a mut [ScratchPool],
    validity: usize,
    steps: Vec<Step>,
    temps: Vec<SlotRange>,
    owned: Vec<SlotRange>,
    used: Vec<SlotRange>,
    finished: bool,
}

impl Drop for Compiler<'_> {
    fn drop(&mut self) {
        for r in self.temps.drain(..) {
            let _ = self.pools[r.slot].free(r.range);
        }
        if !self.finished {
            for r in self.owned.drain(..) {
                let _ = self.pools[r.slot].free(r.range);
            }
        }
    }
}

impl<'a> Compiler<'a> {
    pub fn new(memory: &'a mut PimMemory) -> Self {
        Compiler::detached(&memory.layout, &mut memory.pools, memory.validity)
    }

    /// A compiler over an explicit scratch state (used for dry-run costing).
    pub(crate) fn detached(layout: &'a RelationLayout, pools: &'a mut [ScratchPool], validity: usize) -> Self {
        Compiler { layout, pools, validity, steps: Vec::new(), temps: Vec::new(), owned: Vec::new(), used: Vec::new(), finished: false }
    }

    pub fn layout(&self) -> &RelationLayout {
        self.layout
    }

    /// Completes the template. Temporaries are released; `result` and any
    /// other outputs stay allocated.
    pub fn finish(mut self, result: SlotRange) -> PimProgram {
        for r in std::mem::take(&mut self.temps) {
            let _ = self.pools[r.slot].free(r.range);
        }
        self.finished = true;
        PimProgram { steps: std::mem::take(&mut self.steps), scratch_used: std::mem::take(&mut self.used), result }
    }

    fn alloc(&mut self, slot: usize, n: usize) -> Result<SlotRange, IsaError> {
        let range = self.pools[slot].alloc(n)?;
        let r = SlotRange { slot, range };
        self.used.push(r);
        Ok(r)
    }

    fn temp(&mut self, slot: usize, n: usize) -> Result<SlotRange, IsaError> {
        let r = self.alloc(slot, n)?;
        self.temps.push(r);
        Ok(r)
    }

    /// Allocates a range that outlives the program.
    pub fn output(&mut self, slot: usize, n: usize) -> Result<SlotRange, IsaError> {
        let r = self.alloc(slot, n)?;
        self.owned.push(r);
        Ok(r)
    }

    /// Frees an output that later steps of the same template no longer need.
    pub fn discard(&mut self, r: SlotRange) {
        if let Some(i) = self.owned.iter().position(|t| *t == r) {
            self.owned.swap_remove(i);
            let _ = self.pools[r.slot].free(r.range);
        }
    }

    /// Outputs still allocated, in allocation order.
    pub fn outputs(&self) -> &[SlotRange] {
        &self.owned
    }

    fn release(&mut self, r: SlotRange) {
        if let Some(i) = self.temps.iter().position(|t| *t == r) {
            self.temps.swap_remove(i);
            let _ = self.pools[r.slot].free(r.range);
        }
    }

    fn emit(&mut self, slot: usize, op: ColOp) {
        self.steps.push(Step::Col { slot, op });
    }

    fn spec(&self, name: &str) -> Result<(AttributeSpec, SlotRange), IsaError> {
        let a = self.layout.attr(name)?;
        Ok((a.spec.clone(), a.slot_range()))
    }

    /// Attribute columns as seen from `slot`. Attributes of the other
    /// partition are not addressable without an explicit copy.
    pub fn attr_cols(&self, name: &str, slot: usize) -> Result<SlotRange, IsaError> {
        let a = self.layout.attr(name)?;
        if a.slot != slot {
            return Err(IsaError::CrossPartition { attr: name.to_string(), slot });
        }
        Ok(a.slot_range())
    }

    /// Returns `r` itself if already in `slot`, otherwise a temp copy there.
    fn bring(&mut self, r: SlotRange, slot: usize) -> Result<(SlotRange, bool), IsaError> {
        if r.slot == slot {
            return Ok((r, false));
        }
        let t = self.temp(slot, r.len())?;
        self.steps.push(Step::Copy { from: r, to: t });
        Ok((t, true))
    }

    /// Moves a temp result into `slot`, releasing the original.
    fn relocate(&mut self, r: SlotRange, slot: usize) -> Result<SlotRange, IsaError> {
        let (t, copied) = self.bring(r, slot)?;
        if copied {
            self.release(r);
        }
        Ok(t)
    }

    pub fn copy_to_slot(&mut self, r: SlotRange, slot: usize) -> Result<SlotRange, IsaError> {
        let out = self.output(slot, r.len())?;
        if r.slot == slot {
            for i in 0..r.len() {
                self.emit(slot, ColOp::copy(r.col(i), out.col(i)));
            }
        } else {
            self.steps.push(Step::Copy { from: r, to: out });
        }
        Ok(out)
    }

    // ---------------------------------------------------------------- filters

    /// One-column filter result in slot 0, ANDed with validity.
    pub fn predicate(&mut self, pred: Option<&PredicateExpr>) -> Result<SlotRange, IsaError> {
        let out = self.output(0, 1)?;
        match pred {
            None => self.emit(0, ColOp::copy(self.validity, out.col(0))),
            Some(p) => {
                let r = self.pred_node(p)?;
                let r = self.relocate(r, 0)?;
                self.emit(0, ColOp::and(r.col(0), self.validity, out.col(0)));
                self.release(r);
            }
        }
        Ok(out)
    }

    fn pred_node(&mut self, p: &PredicateExpr) -> Result<SlotRange, IsaError> {
        match p {
            PredicateExpr::Cmp { attr, op, rhs } => self.compare(attr, *op, rhs),
            PredicateExpr::And(a, b) | PredicateExpr::Or(a, b) => {
                let mut x = self.pred_node(a)?;
                let mut y = self.pred_node(b)?;
                if x.slot != y.slot {
                    x = self.relocate(x, 0)?;
                    y = self.relocate(y, 0)?;
                }
                let op = if matches!(p, PredicateExpr::And(..)) {
                    ColOp::and(x.col(0), y.col(0), x.col(0))
                } else {
                    ColOp::or(x.col(0), y.col(0), x.col(0))
                };
                self.emit(x.slot, op);
                self.release(y);
                Ok(x)
            }
            PredicateExpr::Not(a) => {
                let x = self.pred_node(a)?;
                self.emit(x.slot, ColOp::not(x.col(0), x.col(0)));
                Ok(x)
            }
        }
    }

    fn compare(&mut self, attr: &str, op: CmpOp, rhs: &Operand) -> Result<SlotRange, IsaError> {
        let (spec, a) = self.spec(attr)?;
        let slot = a.slot;
        let res = self.temp(slot, 1)?;
        let a_cols: Vec<usize> = a.range.cols().collect();
        match rhs {
            Operand::Imm(v) => {
                let v128 = *v as i128;
                if !spec.fits(v128) {
                    let always = match op {
                        CmpOp::Eq => false,
                        CmpOp::Ne => true,
                        CmpOp::Lt | CmpOp::Le => v128 > spec.max_value(),
                        CmpOp::Gt | CmpOp::Ge => v128 < spec.min_value(),
                    };
                    self.emit(slot, ColOp::set(always, res.col(0)));
                    return Ok(res);
                }
                self.compare_circuit(slot, &a_cols, Rhs::Imm(spec.encode(*v)), spec.signed, op, res.col(0))?;
            }
            Operand::Attr(other) => {
                let (bspec, b) = self.spec(other)?;
                if bspec.width != spec.width {
                    return Err(IsaError::WidthMismatch {
                        lhs: attr.to_string(),
                        rhs: other.clone(),
                        lhs_width: spec.width,
                        rhs_width: bspec.width,
                    });
                }
                if bspec.signed != spec.signed {
                    return Err(IsaError::SignednessMismatch { lhs: attr.to_string(), rhs: other.clone() });
                }
                let (b, copied) = self.bring(b, slot)?;
                let b_cols: Vec<usize> = b.range.cols().collect();
                self.compare_circuit(slot, &a_cols, Rhs::Cols(&b_cols), spec.signed, op, res.col(0))?;
                if copied {
                    self.release(b);
                }
            }
        }
        Ok(res)
    }

    fn compare_circuit(
        &mut self,
        slot: usize,
        a: &[usize],
        b: Rhs<'_>,
        signed: bool,
        op: CmpOp,
        res: usize,
    ) -> Result<(), IsaError> {
        let w = a.len();
        let imm_col = match b {
            Rhs::Imm(_) => Some(self.temp(slot, 1)?.col(0)),
            Rhs::Cols(_) => None,
        };
        let t = self.temp(slot, 2)?;
        let (t0, t1) = (t.col(0), t.col(1));
        match op {
            CmpOp::Eq | CmpOp::Ne => {
                let acc = res;
                for i in 0..w {
                    let bi = match b {
                        Rhs::Cols(bc) => bc[i],
                        Rhs::Imm(v) => {
                            let c = imm_col.expect("imm column");
                            self.emit(slot, ColOp::set((v >> i) & 1 == 1, c));
                            c
                        }
                    };
                    if i == 0 {
                        self.emit(slot, ColOp::xor(a[0], bi, acc));
                    } else {
                        self.emit(slot, ColOp::xor(a[i], bi, t0));
                        self.emit(slot, ColOp::or(acc, t0, acc));
                    }
                }
                if op == CmpOp::Eq {
                    self.emit(slot, ColOp::not(acc, acc));
                }
            }
            _ => {
                let chain = self.temp(slot, 2)?;
                let (lt, eq) = (chain.col(0), chain.col(1));
                let bias = if signed { Some(self.temp(slot, 2)?) } else { None };
                self.emit(slot, ColOp::set(false, lt));
                self.emit(slot, ColOp::set(true, eq));
                let need_final_eq = matches!(op, CmpOp::Le | CmpOp::Gt);
                for i in (0..w).rev() {
                    let sign = signed && i == w - 1;
                    let ai = if sign {
                        let na = bias.expect("bias columns").col(0);
                        self.emit(slot, ColOp::not(a[i], na));
                        na
                    } else {
                        a[i]
                    };
                    let bi = match b {
                        Rhs::Cols(bc) => {
                            if sign {
                                let nb = bias.expect("bias columns").col(1);
                                self.emit(slot, ColOp::not(bc[i], nb));
                                nb
                            } else {
                                bc[i]
                            }
                        }
                        Rhs::Imm(v) => {
                            let c = imm_col.expect("imm column");
                            let bit = ((v >> i) & 1 == 1) ^ sign;
                            self.emit(slot, ColOp::set(bit, c));
                            c
                        }
                    };
                    // lt |= eq & !a & b
                    self.emit(slot, ColOp::not(ai, t0));
                    self.emit(slot, ColOp::and(t0, bi, t0));
                    self.emit(slot, ColOp::and(t0, eq, t0));
                    self.emit(slot, ColOp::or(lt, t0, lt));
                    if i > 0 || need_final_eq {
                        // eq &= !(a ^ b)
                        self.emit(slot, ColOp::xor(ai, bi, t1));
                        self.emit(slot, ColOp::not(t1, t1));
                        self.emit(slot, ColOp::and(eq, t1, eq));
                    }
                }
                let out = match op {
                    CmpOp::Lt => ColOp::copy(lt, res),
                    CmpOp::Ge => ColOp::not(lt, res),
                    CmpOp::Le => ColOp::or(lt, eq, res),
                    CmpOp::Gt => ColOp::nor(lt, eq, res),
                    CmpOp::Eq | CmpOp::Ne => unreachable!(),
                };
                self.emit(slot, out);
                if let Some(bias) = bias {
                    self.release(bias);
                }
                self.release(chain);
            }
        }
        self.release(t);
        if let Some(c) = imm_col {
            self.release(SlotRange::new(slot, c, 1));
        }
        Ok(())
    }

    /// AND two one-column results into a fresh output in slot 0.
    pub fn and_cols(&mut self, a: SlotRange, b: SlotRange) -> Result<SlotRange, IsaError> {
        let out = self.output(0, 1)?;
        let (a, ca) = self.bring(a, 0)?;
        let (b, cb) = self.bring(b, 0)?;
        self.emit(0, ColOp::and(a.col(0), b.col(0), out.col(0)));
        if ca {
            self.release(a);
        }
        if cb {
            self.release(b);
        }
        Ok(out)
    }

    /// `acc |= src` in place (both one column, slot 0).
    pub fn or_into(&mut self, acc: SlotRange, src: SlotRange) {
        self.emit(acc.slot, ColOp::or(acc.col(0), src.col(0), acc.col(0)));
    }

    /// `out = a AND NOT b` into a fresh output in slot 0.
    pub fn and_not(&mut self, a: SlotRange, b: SlotRange) -> Result<SlotRange, IsaError> {
        let out = self.output(0, 1)?;
        self.emit(0, ColOp::not(b.col(0), out.col(0)));
        self.emit(0, ColOp::and(a.col(0), out.col(0), out.col(0)));
        Ok(out)
    }

    /// A fresh all-zero column in slot 0.
    pub fn zero_col(&mut self) -> Result<SlotRange, IsaError> {
        let out = self.output(0, 1)?;
        self.emit(0, ColOp::set(false, out.col(0)));
        Ok(out)
    }

    // ------------------------------------------------------------- arithmetic

    /// Natural (non-overflowing) result width of an unsigned expression.
    pub fn infer_width(&self, e: &ArithExpr) -> Result<u32, IsaError> {
        Ok(match e {
            ArithExpr::Attr(a) => {
                let (spec, _) = self.spec(a)?;
                if spec.signed {
                    return Err(IsaError::SignedArithmetic(a.clone()));
                }
                spec.width
            }
            ArithExpr::Imm(v) => imm_width(*v)?,
            ArithExpr::Add(a, b) => self.infer_width(a)?.max(self.infer_width(b)?) + 1,
            ArithExpr::Mul(a, b) => self.infer_width(a)? + self.infer_width(b)?,
        })
    }

    fn slot_weights(&self, e: &ArithExpr, w: &mut [usize]) -> Result<(), IsaError> {
        match e {
            ArithExpr::Attr(a) => {
                let p = self.layout.attr(a)?;
                w[p.slot] += p.cols.len;
            }
            ArithExpr::Imm(_) => {}
            ArithExpr::Add(a, b) | ArithExpr::Mul(a, b) => {
                self.slot_weights(a, w)?;
                self.slot_weights(b, w)?;
            }
        }
        Ok(())
    }

    /// Evaluates `e` into fresh output columns. Arithmetic wraps at
    /// `declared` bits; without a declaration the natural width is used and
    /// must not exceed 64.
    pub fn arith(&mut self, e: &ArithExpr, declared: Option<u32>) -> Result<SlotRange, IsaError> {
        let natural = self.infer_width(e);
        let width = match (declared, natural) {
            (Some(d), _) if d == 0 || d > 64 => return Err(IsaError::WidthOverflow { width: d }),
            (Some(d), Ok(n)) => d.min(n),
            (Some(_), Err(IsaError::WidthOverflow { .. })) => declared.unwrap_or(64),
            (Some(_), Err(e)) => return Err(e),
            (None, Ok(n)) if n > 64 => return Err(IsaError::WidthOverflow { width: n }),
            (None, Ok(n)) => n,
            (None, Err(e)) => return Err(e),
        };
        let mut weights = vec![0usize; self.layout.slots()];
        self.slot_weights(e, &mut weights)?;
        let slot = if weights.len() > 1 && weights[1] > weights[0] { 1 } else { 0 };
        let out = self.output(slot, width as usize)?;
        let dest: Vec<usize> = out.range.cols().collect();
        self.eval_into(e, slot, &dest)?;
        Ok(out)
    }

    fn natural(&self, e: &ArithExpr) -> u32 {
        match e {
            ArithExpr::Attr(a) => self.layout.attr(a).map(|p| p.spec.width).unwrap_or(64),
            ArithExpr::Imm(v) => imm_width(*v).unwrap_or(64),
            ArithExpr::Add(a, b) => (self.natural(a).max(self.natural(b)) + 1).min(128),
            ArithExpr::Mul(a, b) => (self.natural(a) + self.natural(b)).min(128),
        }
    }

    /// Column view of `e` truncated to `width` bits; attributes are used in place.
    fn operand(&mut self, e: &ArithExpr, slot: usize, width: usize) -> Result<(Vec<usize>, Option<SlotRange>), IsaError> {
        let w = width.min(self.natural(e) as usize).max(1);
        match e {
            ArithExpr::Attr(a) => {
                let p = self.layout.attr(a)?.slot_range();
                let view = SlotRange::new(p.slot, p.range.start, w.min(p.len()));
                let (r, copied) = self.bring(view, slot)?;
                Ok((r.range.cols().collect(), copied.then_some(r)))
            }
            _ => {
                let t = self.temp(slot, w)?;
                let cols: Vec<usize> = t.range.cols().collect();
                self.eval_into(e, slot, &cols)?;
                Ok((cols, Some(t)))
            }
        }
    }

    fn eval_into(&mut self, e: &ArithExpr, slot: usize, dest: &[usize]) -> Result<(), IsaError> {
        let width = dest.len();
        match e {
            ArithExpr::Attr(_) => {
                let (src, tmp) = self.operand(e, slot, width)?;
                for (i, &d) in dest.iter().enumerate() {
                    match src.get(i) {
                        Some(&s) => self.emit(slot, ColOp::copy(s, d)),
                        None => self.emit(slot, ColOp::set(false, d)),
                    }
                }
                if let Some(t) = tmp {
                    self.release(t);
                }
            }
            ArithExpr::Imm(v) => {
                let v = *v as u64;
                for (i, &d) in dest.iter().enumerate() {
                    self.emit(slot, ColOp::set(i < 64 && (v >> i) & 1 == 1, d));
                }
            }
            ArithExpr::Add(a, b) => {
                let (x, tx) = self.operand(a, slot, width)?;
                let (y, ty) = self.operand(b, slot, width)?;
                self.ripple_add(slot, &x, &y, dest)?;
                for t in [tx, ty].into_iter().flatten() {
                    self.release(t);
                }
            }
            ArithExpr::Mul(a, b) => {
                let (x, tx) = self.operand(a, slot, width)?;
                let (y, ty) = self.operand(b, slot, width)?;
                self.shift_add_mul(slot, &x, &y, dest)?;
                for t in [tx, ty].into_iter().flatten() {
                    self.release(t);
                }
            }
        }
        Ok(())
    }

    /// `dest = x + y (mod 2^dest.len())`; `dest` is disjoint from the operands.
    fn ripple_add(&mut self, slot: usize, x: &[usize], y: &[usize], dest: &[usize]) -> Result<(), IsaError> {
        let t = self.temp(slot, 3)?;
        let (c, t0, t1) = (t.col(0), t.col(1), t.col(2));
        self.emit(slot, ColOp::set(false, c));
        let n = dest.len();
        for i in 0..n {
            let last = i + 1 == n;
            match (x.get(i).copied(), y.get(i).copied()) {
                (Some(a), Some(b)) => {
                    self.emit(slot, ColOp::xor(a, b, t0));
                    self.emit(slot, ColOp::xor(t0, c, dest[i]));
                    if !last {
                        self.emit(slot, ColOp::and(a, b, t1));
                        self.emit(slot, ColOp::and(t0, c, t0));
                        self.emit(slot, ColOp::or(t1, t0, c));
                    }
                }
                (Some(a), None) | (None, Some(a)) => {
                    self.emit(slot, ColOp::xor(a, c, dest[i]));
                    if !last {
                        self.emit(slot, ColOp::and(a, c, c));
                    }
                }
                (None, None) => {
                    self.emit(slot, ColOp::copy(c, dest[i]));
                    if !last {
                        self.emit(slot, ColOp::set(false, c));
                    }
                }
            }
        }
        self.release(t);
        Ok(())
    }

    /// `acc[from..to] += addend(k)` in place with carry ripple; `addend(k)`
    /// returns the column holding bit `k` of the addend, if any.
    fn add_in_place(
        &mut self,
        slot: usize,
        acc: &[usize],
        from: usize,
        to: usize,
        mut addend: impl FnMut(&mut Self, usize) -> Option<usize>,
    ) -> Result<(), IsaError> {
        let t = self.temp(slot, 3)?;
        let (c, t0, t1) = (t.col(0), t.col(1), t.col(2));
        self.emit(slot, ColOp::set(false, c));
        for k in from..to {
            let last = k + 1 == to;
            let a = acc[k];
            match addend(self, k) {
                Some(p) => {
                    self.emit(slot, ColOp::xor(a, p, t0));
                    self.emit(slot, ColOp::and(a, p, t1));
                    self.emit(slot, ColOp::xor(t0, c, a));
                    if !last {
                        self.emit(slot, ColOp::and(t0, c, t0));
                        self.emit(slot, ColOp::or(t1, t0, c));
                    }
                }
                None => {
                    if !last {
                        self.emit(slot, ColOp::and(a, c, t1));
                    }
                    self.emit(slot, ColOp::xor(a, c, a));
                    if !last {
                        self.emit(slot, ColOp::copy(t1, c));
                    }
                }
            }
        }
        self.release(t);
        Ok(())
    }

    fn shift_add_mul(&mut self, slot: usize, x: &[usize], y: &[usize], dest: &[usize]) -> Result<(), IsaError> {
        for &d in dest {
            self.emit(slot, ColOp::set(false, d));
        }
        let pp = self.temp(slot, 1)?.col(0);
        let wx = x.len();
        for (j, &yj) in y.iter().enumerate() {
            if j >= dest.len() {
                break;
            }
            let hi = dest.len().min(wx + j + 1);
            self.add_in_place(slot, dest, j, hi, |c, k| {
                let xi = k - j;
                (xi < wx).then(|| {
                    c.emit(slot, ColOp::and(x[xi], yj, pp));
                    pp
                })
            })?;
        }
        self.release(SlotRange::new(slot, pp, 1));
        Ok(())
    }

    // ---------------------------------------------------------- aggregation

    /// Nullifies non-selected rows of `source` into fresh columns: zero for
    /// SUM/MAX, all-ones for MIN. COUNT copies the mask itself.
    pub fn mask(&mut self, source: SlotRange, signed: bool, mask: SlotRange, kind: AggKind) -> Result<MaskedSource, IsaError> {
        if kind == AggKind::Avg {
            return Err(IsaError::Unsupported("AVG must be composed from SUM and COUNT".into()));
        }
        let slot = if kind == AggKind::Count { mask.slot } else { source.slot };
        let (m, copied) = self.bring(mask, slot)?;
        let m0 = m.col(0);
        if kind == AggKind::Count {
            let out = self.output(slot, 1)?;
            self.emit(slot, ColOp::copy(m0, out.col(0)));
            if copied {
                self.release(m);
            }
            return Ok(MaskedSource { range: out, kind, signed: false, biased: false });
        }
        let w = source.len();
        let out = self.output(slot, w)?;
        let biased = signed && matches!(kind, AggKind::Min | AggKind::Max);
        let scratch = self.temp(slot, 2)?;
        let (nm, t) = (scratch.col(0), scratch.col(1));
        if kind == AggKind::Min {
            self.emit(slot, ColOp::not(m0, nm));
        }
        for i in 0..w {
            let mut s = source.col(i);
            if biased && i == w - 1 {
                self.emit(slot, ColOp::not(s, t));
                s = t;
            }
            let op = match kind {
                AggKind::Min => ColOp::or(s, nm, out.col(i)),
                _ => ColOp::and(s, m0, out.col(i)),
            };
            self.emit(slot, op);
        }
        self.release(scratch);
        if copied {
            self.release(m);
        }
        Ok(MaskedSource { range: out, kind, signed: signed && kind == AggKind::Sum, biased })
    }

    /// In-array balanced reduction over `rows` rows. The partial ends up in
    /// row 0 of the returned columns. Rows past the end read as the
    /// aggregation identity.
    pub fn reduction_tree(&mut self, m: &MaskedSource, rows: usize) -> Result<SlotRange, IsaError> {
        let slot = m.range.slot;
        let w = m.range.len();
        let is_sum = matches!(m.kind, AggKind::Sum | AggKind::Count);
        let r = if is_sum { sum_width(w as u32, rows) as usize } else { w };
        let acc = self.output(slot, r)?;
        let part = self.temp(slot, r)?;
        for i in 0..r {
            if i < w {
                self.emit(slot, ColOp::copy(m.range.col(i), acc.col(i)));
            } else if m.signed {
                self.emit(slot, ColOp::copy(m.range.col(w - 1), acc.col(i)));
            } else {
                self.emit(slot, ColOp::set(false, acc.col(i)));
            }
        }
        let acc_cols: Vec<usize> = acc.range.cols().collect();
        let part_cols: Vec<usize> = part.range.cols().collect();
        let fill = m.kind == AggKind::Min;
        let mut offset = rows.next_power_of_two() / 2;
        while offset >= 1 {
            for i in 0..r {
                self.steps.push(Step::Shift { slot, src: acc.col(i), dest: part.col(i), offset, fill });
            }
            if is_sum {
                self.add_in_place(slot, &acc_cols, 0, r, |_, k| Some(part_cols[k]))?;
            } else {
                let sel = self.temp(slot, 4)?;
                let (lt, nlt, t0, t1) = (sel.col(0), sel.col(1), sel.col(2), sel.col(3));
                self.compare_circuit(slot, &acc_cols, Rhs::Cols(&part_cols), false, CmpOp::Lt, lt)?;
                self.emit(slot, ColOp::not(lt, nlt));
                // MIN keeps acc where acc < part; MAX takes part there.
                let (on_lt, on_ge) = if m.kind == AggKind::Min { (&acc_cols, &part_cols) } else { (&part_cols, &acc_cols) };
                for i in 0..r {
                    self.emit(slot, ColOp::and(lt, on_lt[i], t0));
                    self.emit(slot, ColOp::and(nlt, on_ge[i], t1));
                    self.emit(slot, ColOp::or(t0, t1, acc_cols[i]));
                }
                self.release(sel);
            }
            offset /= 2;
        }
        self.release(part);
        Ok(acc)
    }

    // ----------------------------------------------------------------- update

    /// `attr := mask ? value : attr` with column ops only.
    pub fn mux(&mut self, attr: &str, mask: SlotRange, value: i64) -> Result<SlotRange, IsaError> {
        let (spec, a) = self.spec(attr)?;
        if !spec.fits(value as i128) {
            return Err(IsaError::ImmediateOverflow { attr: attr.to_string(), value });
        }
        let slot = a.slot;
        let (m, copied) = self.bring(mask, slot)?;
        let nm = self.temp(slot, 1)?.col(0);
        self.emit(slot, ColOp::not(m.col(0), nm));
        let bits = spec.encode(value);
        for i in 0..a.len() {
            let op = if (bits >> i) & 1 == 1 {
                ColOp::or(a.col(i), m.col(0), a.col(i))
            } else {
                ColOp::and(a.col(i), nm, a.col(i))
            };
            self.emit(slot, op);
        }
        self.release(SlotRange::new(slot, nm, 1));
        if copied {
            self.release(m);
        }
        Ok(a)
    }
}

fn imm_width(v: i64) -> Result<u32, IsaError> {
    if v < 0 {
        return Err(IsaError::NegativeImmediate(v));
    }
    Ok((64 - (v as u64).leading_zeros()).max(1))
}
