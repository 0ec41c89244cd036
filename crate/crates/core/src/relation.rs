//! Attribute descriptors and plain row-major tables.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    /// Bits, 1..=64.
    pub width: u32,
    #[serde(default)]
    pub signed: bool,
}

impl AttributeSpec {
    pub fn unsigned(name: impl Into<String>, width: u32) -> Self {
        AttributeSpec { name: name.into(), width, signed: false }
    }

    pub fn signed(name: impl Into<String>, width: u32) -> Self {
        AttributeSpec { name: name.into(), width, signed: true }
    }

    pub fn min_value(&self) -> i128 {
        if self.signed {
            -(1i128 << (self.width - 1))
        } else {
            0
        }
    }

    pub fn max_value(&self) -> i128 {
        if self.signed {
            (1i128 << (self.width - 1)) - 1
        } else {
            (1i128 << self.width) - 1
        }
    }

    pub fn fits(&self, v: i128) -> bool {
        v >= self.min_value() && v <= self.max_value()
    }

    /// Two's-complement bit pattern in `width` bits. Caller checks `fits`.
    pub fn encode(&self, v: i64) -> u64 {
        let bits = v as u64;
        if self.width == 64 {
            bits
        } else {
            bits & ((1u64 << self.width) - 1)
        }
    }

    pub fn decode(&self, bits: u64) -> i64 {
        decode_bits(bits as u128, self.width, self.signed) as i64
    }
}

/// Interprets the low `width` bits of `raw` as unsigned or two's-complement.
pub fn decode_bits(raw: u128, width: u32, signed: bool) -> i128 {
    let masked = if width >= 128 { raw } else { raw & ((1u128 << width) - 1) };
    if signed && width > 0 && width < 128 && (masked >> (width - 1)) & 1 == 1 {
        masked as i128 - (1i128 << width)
    } else {
        masked as i128
    }
}

/// Minimal power-of-two bit width covering `[min, max]`.
pub fn pow2_width(min: i64, max: i64) -> (u32, bool) {
    let signed = min < 0;
    let mut w = 1u32;
    loop {
        let spec = AttributeSpec { name: String::new(), width: w, signed };
        if spec.fits(min as i128) && spec.fits(max as i128) {
            return (w, signed);
        }
        w *= 2;
    }
}

/// A plain relation with integer-encoded values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostTable {
    pub name: String,
    pub schema: Vec<AttributeSpec>,
    pub rows: Vec<Vec<i64>>,
}

impl HostTable {
    pub fn new(name: impl Into<String>, schema: Vec<AttributeSpec>) -> Self {
        HostTable { name: name.into(), schema, rows: Vec::new() }
    }

    pub fn index_of(&self, attr: &str) -> Option<usize> {
        self.schema.iter().position(|a| a.name == attr)
    }

    pub fn column(&self, attr: &str) -> Option<Vec<i64>> {
        let i = self.index_of(attr)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn spec(&self, attr: &str) -> Option<&AttributeSpec> {
        self.schema.iter().find(|a| a.name == attr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_signed() {
        let a = AttributeSpec::signed("d", 8);
        assert!(a.fits(-128) && a.fits(127) && !a.fits(128) && !a.fits(-129));
        assert_eq!(a.encode(-1), 0xff);
        assert_eq!(a.decode(0xff), -1);
        assert_eq!(a.decode(0x80), -128);
        let u = AttributeSpec::unsigned("u", 64);
        assert_eq!(u.max_value(), u64::MAX as i128);
    }

    #[test]
    fn power_of_two_widths() {
        assert_eq!(pow2_width(1, 50), (8, false));
        assert_eq!(pow2_width(0, 1), (1, false));
        assert_eq!(pow2_width(0, 3), (2, false));
        assert_eq!(pow2_width(0, 200), (8, false));
        assert_eq!(pow2_width(0, 400), (16, false));
        assert_eq!(pow2_width(19920101, 19981231), (32, false));
        assert_eq!(pow2_width(-3, 3), (4, true));
    }
}
