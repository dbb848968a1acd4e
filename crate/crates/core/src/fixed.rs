//! Signed fixed-point numbers with a runtime-selected `<total, integer>` bit
//! split. Conversion and multiplication round to nearest with ties away from
//! zero; every operation saturates at the format bounds instead of wrapping.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FxFormat {
    total_bits: u8,
    int_bits: u8,
}

impl FxFormat {
    /// 27 bits total, 8 integer bits (sign included), 19 fractional bits.
    pub const Q27_8: FxFormat = FxFormat {
        total_bits: 27,
        int_bits: 8,
    };

    pub fn new(total_bits: u32, int_bits: u32) -> Result<Self> {
        if !(2..=63).contains(&total_bits) {
            return Err(Error::InvalidFormat(format!(
                "total bits {total_bits} outside 2..=63"
            )));
        }
        if int_bits < 1 || int_bits > total_bits {
            return Err(Error::InvalidFormat(format!(
                "integer bits {int_bits} outside 1..={total_bits}"
            )));
        }
        Ok(Self {
            total_bits: total_bits as u8,
            int_bits: int_bits as u8,
        })
    }

    #[inline]
    pub fn total_bits(self) -> u32 {
        self.total_bits as u32
    }

    #[inline]
    pub fn int_bits(self) -> u32 {
        self.int_bits as u32
    }

    #[inline]
    pub fn frac_bits(self) -> u32 {
        (self.total_bits - self.int_bits) as u32
    }

    #[inline]
    pub fn max_raw(self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    #[inline]
    pub fn min_raw(self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    /// Value of one unit in the last place.
    #[inline]
    pub fn resolution(self) -> f64 {
        (-(self.frac_bits() as f64)).exp2()
    }

    #[inline]
    pub fn saturate(self, raw: i64) -> i64 {
        raw.clamp(self.min_raw(), self.max_raw())
    }

    #[inline]
    fn saturate_wide(self, raw: i128) -> i64 {
        raw.clamp(self.min_raw() as i128, self.max_raw() as i128) as i64
    }

    /// Raw value nearest to `x` (ties away from zero), saturated. NaN maps to 0.
    #[inline]
    pub fn quantize_raw(self, x: f64) -> i64 {
        if x.is_nan() {
            return 0;
        }
        let scaled = (x * (self.frac_bits() as f64).exp2()).round();
        if scaled >= self.max_raw() as f64 {
            self.max_raw()
        } else if scaled <= self.min_raw() as f64 {
            self.min_raw()
        } else {
            scaled as i64
        }
    }

    #[inline]
    pub fn raw_to_real(self, raw: i64) -> f64 {
        raw as f64 * self.resolution()
    }

    #[inline]
    pub fn add_raw(self, a: i64, b: i64) -> i64 {
        // Both operands fit in 63 bits, so the sum cannot overflow i64.
        self.saturate(a + b)
    }

    /// Full-precision product, shifted back by the fractional bits with
    /// round-half-away-from-zero, then saturated.
    #[inline]
    pub fn mul_raw(self, a: i64, b: i64) -> i64 {
        let frac = self.frac_bits();
        if self.total_bits <= 32 {
            // |a|, |b| < 2^31 so the product fits in 62 bits.
            let p = a * b;
            if frac == 0 {
                return self.saturate(p);
            }
            let half = 1i64 << (frac - 1);
            let mag = (p.abs() + half) >> frac;
            self.saturate(if p < 0 { -mag } else { mag })
        } else {
            let p = a as i128 * b as i128;
            if frac == 0 {
                return self.saturate_wide(p);
            }
            let half = 1i128 << (frac - 1);
            let mag = (p.abs() + half) >> frac;
            self.saturate_wide(if p < 0 { -mag } else { mag })
        }
    }

    #[inline]
    pub fn tanh_raw(self, raw: i64) -> i64 {
        self.quantize_raw(self.raw_to_real(raw).tanh())
    }
}

impl Default for FxFormat {
    fn default() -> Self {
        Self::Q27_8
    }
}

impl fmt::Display for FxFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fixed<{},{}>", self.total_bits, self.int_bits)
    }
}

impl FromStr for FxFormat {
    type Err = Error;

    /// Parses `fixed<T,I>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidFormat(format!("expected fixed<T,I>, got {s:?}"));
        let inner = s
            .trim()
            .strip_prefix("fixed<")
            .and_then(|rest| rest.strip_suffix('>'))
            .ok_or_else(bad)?;
        let (total, int) = inner.split_once(',').ok_or_else(bad)?;
        let total: u32 = total.trim().parse().map_err(|_| bad())?;
        let int: u32 = int.trim().parse().map_err(|_| bad())?;
        FxFormat::new(total, int)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FxValue {
    raw: i64,
    format: FxFormat,
}

impl FxValue {
    /// Builds a value from its raw integer, saturating into range.
    pub fn from_raw(raw: i64, format: FxFormat) -> Self {
        Self {
            raw: format.saturate(raw),
            format,
        }
    }

    pub fn zero(format: FxFormat) -> Self {
        Self { raw: 0, format }
    }

    pub fn raw(self) -> i64 {
        self.raw
    }

    pub fn format(self) -> FxFormat {
        self.format
    }

    fn check(self, other: FxValue) -> Result<FxFormat> {
        if self.format == other.format {
            Ok(self.format)
        } else {
            Err(Error::FormatMismatch(self.format, other.format))
        }
    }
}

impl fmt::Display for FxValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", to_real(*self))
    }
}

pub fn to_fixed(x: f64, format: FxFormat) -> FxValue {
    FxValue {
        raw: format.quantize_raw(x),
        format,
    }
}

pub fn to_real(v: FxValue) -> f64 {
    v.format.raw_to_real(v.raw)
}

pub fn fx_add(a: FxValue, b: FxValue) -> Result<FxValue> {
    let format = a.check(b)?;
    Ok(FxValue {
        raw: format.add_raw(a.raw, b.raw),
        format,
    })
}

pub fn fx_mul(a: FxValue, b: FxValue) -> Result<FxValue> {
    let format = a.check(b)?;
    Ok(FxValue {
        raw: format.mul_raw(a.raw, b.raw),
        format,
    })
}

/// `tanh` evaluated in f64 on the represented value, then requantized.
pub fn fx_tanh(v: FxValue) -> FxValue {
    FxValue {
        raw: v.format.tanh_raw(v.raw),
        format: v.format,
    }
}
