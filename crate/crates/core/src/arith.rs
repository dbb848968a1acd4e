//! Number systems the engine can run in.
//!
//! An [`Arithmetic`] is a small context object that knows how to build and
//! combine values of its `Value` type. Keeping the format in the context
//! (rather than in every value) lets fixed-point tensors store bare raw
//! integers.

use std::fmt::Debug;

use crate::fixed::FxFormat;

pub trait Arithmetic: Copy + Debug + Send + Sync {
    type Value: Copy + Debug + PartialEq + PartialOrd + Send + Sync;

    fn zero(&self) -> Self::Value;
    fn from_f64(&self, x: f64) -> Self::Value;
    fn to_f64(&self, v: Self::Value) -> f64;
    fn add(&self, a: Self::Value, b: Self::Value) -> Self::Value;
    fn mul(&self, a: Self::Value, b: Self::Value) -> Self::Value;
    /// Layer activation.
    fn tanh(&self, v: Self::Value) -> Self::Value;

    /// Must equal `add(acc, mul(a, b))`.
    #[inline]
    fn mac(&self, acc: Self::Value, a: Self::Value, b: Self::Value) -> Self::Value {
        self.add(acc, self.mul(a, b))
    }

    /// Asks the matvec kernel to form a block of products before adding
    /// them into the lane accumulators. The result is the same bits; it
    /// only exposes an independent loop to the vectorizer, which pays off
    /// when `mul` is much more expensive than `add`.
    const BATCH_PRODUCTS: bool = false;

    /// Shortcut for `sum_i mul(x_i, w_i)` that may return `Some` only when
    /// every summation order provably yields the same value, so the caller
    /// may skip its lane structure. Returning `None` is always correct.
    #[inline(always)]
    fn order_free_dot(&self, _x: &[Self::Value], _w: &[Self::Value]) -> Option<Self::Value> {
        None
    }

    fn name(&self) -> String;
}

/// 32-bit IEEE-754 arithmetic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RealArith;

impl Arithmetic for RealArith {
    type Value = f32;

    #[inline]
    fn zero(&self) -> f32 {
        0.0
    }
    #[inline]
    fn from_f64(&self, x: f64) -> f32 {
        x as f32
    }
    #[inline]
    fn to_f64(&self, v: f32) -> f64 {
        v as f64
    }
    #[inline]
    fn add(&self, a: f32, b: f32) -> f32 {
        a + b
    }
    #[inline]
    fn mul(&self, a: f32, b: f32) -> f32 {
        a * b
    }
    #[inline]
    fn tanh(&self, v: f32) -> f32 {
        v.tanh()
    }
    fn name(&self) -> String {
        "real".to_string()
    }
}

/// Saturating fixed point; values are raw integers in `format`.
///
/// The format's derived constants are cached here because `mul` and `add`
/// sit in the innermost matvec loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedArith {
    format: FxFormat,
    frac: u32,
    half: i64,
    /// 1 when there are fractional bits to round away, else 0.
    neg_bias: i64,
    min: i64,
    max: i64,
}

impl FixedArith {
    pub fn new(format: FxFormat) -> Self {
        let frac = format.frac_bits();
        Self {
            format,
            frac,
            half: if frac == 0 { 0 } else { 1 << (frac - 1) },
            neg_bias: (frac > 0) as i64,
            min: format.min_raw(),
            max: format.max_raw(),
        }
    }

    pub fn format(&self) -> FxFormat {
        self.format
    }
}

impl Arithmetic for FixedArith {
    type Value = i64;

    const BATCH_PRODUCTS: bool = true;

    #[inline]
    fn zero(&self) -> i64 {
        0
    }
    #[inline]
    fn from_f64(&self, x: f64) -> i64 {
        self.format.quantize_raw(x)
    }
    #[inline]
    fn to_f64(&self, v: i64) -> f64 {
        self.format.raw_to_real(v)
    }
    #[inline(always)]
    fn add(&self, a: i64, b: i64) -> i64 {
        // In-range raws have at most 63 bits, so the sum cannot wrap.
        a.wrapping_add(b).max(self.min).min(self.max)
    }
    #[inline(always)]
    fn mul(&self, a: i64, b: i64) -> i64 {
        if self.format.total_bits() > 32 {
            return wide_mul(self.format, a, b);
        }
        // Arithmetic shift floors, so subtracting one first for negative
        // products turns round-half-up into round-half-away-from-zero.
        // Raws of a format this narrow fit in i32, which lets the
        // vectorizer use a 32x32->64 multiply.
        let p = (a as i32 as i64).wrapping_mul(b as i32 as i64);
        p.wrapping_add(self.half.wrapping_sub((p < 0) as i64 & self.neg_bias))
            .wrapping_shr(self.frac)
            .max(self.min)
            .min(self.max)
    }
    #[inline(always)]
    fn mac(&self, acc: i64, a: i64, b: i64) -> i64 {
        self.add(acc, self.mul(a, b))
    }
    /// When no product and no partial sum can reach the format bounds,
    /// every saturation is a no-op and integer addition is associative, so
    /// the plain sum of rounded products is the answer for any order.
    ///
    /// Magnitudes are bounded by OR-ing `v ^ (v >> 63)` over each slice,
    /// which is at least `|v| - 1` for every element and vectorizes well.
    #[inline(always)]
    fn order_free_dot(&self, x: &[i64], w: &[i64]) -> Option<i64> {
        if self.format.total_bits() > 32 {
            return None;
        }
        let mut sum = 0i64;
        let mut xmag = 0i64;
        let mut wmag = 0i64;
        for (&a, &b) in x.iter().zip(w) {
            let p = (a as i32 as i64).wrapping_mul(b as i32 as i64);
            sum = sum.wrapping_add(
                p.wrapping_add(self.half.wrapping_sub((p < 0) as i64 & self.neg_bias))
                    .wrapping_shr(self.frac),
            );
            xmag |= a ^ (a >> 63);
            wmag |= b ^ (b >> 63);
        }
        let largest_product = (xmag as i128 + 1) * (wmag as i128 + 1);
        let largest_rounded = (largest_product + self.half as i128) >> self.frac;
        if largest_rounded * x.len() as i128 <= self.max as i128 {
            Some(sum)
        } else {
            None
        }
    }

    #[inline]
    fn tanh(&self, v: i64) -> i64 {
        self.format.tanh_raw(v)
    }
    fn name(&self) -> String {
        self.format.to_string()
    }
}

#[cold]
#[inline(never)]
fn wide_mul(format: FxFormat, a: i64, b: i64) -> i64 {
    format.mul_raw(a, b)
}

/// Wrapping arithmetic in the integers modulo 2^64 with an identity
/// activation.
///
/// Addition and multiplication form a commutative ring, so every
/// summation order gives the same bits. Verification uses this to demand
/// exact equality between differently-ordered implementations. Reals are
/// embedded by rounding to the nearest integer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntRing;

impl Arithmetic for IntRing {
    type Value = i64;

    #[inline]
    fn zero(&self) -> i64 {
        0
    }
    #[inline]
    fn from_f64(&self, x: f64) -> i64 {
        x.round() as i64
    }
    #[inline]
    fn to_f64(&self, v: i64) -> f64 {
        v as f64
    }
    #[inline]
    fn add(&self, a: i64, b: i64) -> i64 {
        a.wrapping_add(b)
    }
    #[inline]
    fn mul(&self, a: i64, b: i64) -> i64 {
        a.wrapping_mul(b)
    }
    #[inline]
    fn tanh(&self, v: i64) -> i64 {
        v
    }
    fn name(&self) -> String {
        "int-ring".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_arith_matches_value_api() {
        use crate::fixed::{fx_add, fx_mul, fx_tanh, to_fixed};
        let a = FixedArith::new(FxFormat::Q27_8);
        let (x, y) = (0.3, -1.7);
        let (fx, fy) = (to_fixed(x, a.format()), to_fixed(y, a.format()));
        assert_eq!(a.from_f64(x), fx.raw());
        assert_eq!(a.mul(fx.raw(), fy.raw()), fx_mul(fx, fy).unwrap().raw());
        assert_eq!(a.add(fx.raw(), fy.raw()), fx_add(fx, fy).unwrap().raw());
        assert_eq!(a.tanh(fy.raw()), fx_tanh(fy).raw());
    }

    #[test]
    fn order_free_dot_only_when_nothing_can_saturate() {
        let fmt = FxFormat::Q27_8;
        let a = FixedArith::new(fmt);
        let half: Vec<i64> = vec![fmt.quantize_raw(0.5); 8];
        assert_eq!(a.order_free_dot(&half, &half), Some(fmt.quantize_raw(2.0)));
        let big = vec![fmt.quantize_raw(100.0); 8];
        assert_eq!(a.order_free_dot(&big, &half), None);
        let wide = FixedArith::new(FxFormat::new(40, 8).unwrap());
        assert_eq!(wide.order_free_dot(&half, &half), None);
        assert_eq!(RealArith.order_free_dot(&[1.0], &[1.0]), None);
    }

    #[test]
    fn int_ring_wraps() {
        let r = IntRing;
        assert_eq!(r.add(i64::MAX, 1), i64::MIN);
        assert_eq!(r.mul(3, -4), -12);
        assert_eq!(r.tanh(17), 17);
        assert_eq!(r.from_f64(-0.6), -1);
    }
}
