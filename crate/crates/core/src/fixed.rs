//! Arithmetic in `Z_{2^l}` and the fixed-point encoding of reals into it.
//!
//! Ring elements are stored in a `u64` and all arithmetic wraps modulo `2^64`.
//! For `l < 64` the value is reduced modulo `2^l` wherever the interpretation
//! matters (decoding, truncation, sign extraction, the wire). Reduction is a
//! ring homomorphism `Z_{2^64} -> Z_{2^l}`, so additions and multiplications
//! carried out modulo `2^64` agree with the `l`-bit ring after reduction.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element of `Z_{2^l}`, two's-complement when read as signed.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(transparent)]
pub struct RingElement(pub u64);

impl RingElement {
    pub const ZERO: RingElement = RingElement(0);
    pub const ONE: RingElement = RingElement(1);

    pub fn to_le_bytes(self) -> [u8; 8] {
        self.0.to_le_bytes()
    }

    pub fn from_le_bytes(bytes: [u8; 8]) -> Self {
        RingElement(u64::from_le_bytes(bytes))
    }
}

impl fmt::Debug for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R({:#x})", self.0)
    }
}

impl fmt::Display for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for RingElement {
    type Output = RingElement;
    fn add(self, rhs: Self) -> Self {
        RingElement(self.0.wrapping_add(rhs.0))
    }
}

impl AddAssign for RingElement {
    fn add_assign(&mut self, rhs: Self) {
        self.0 = self.0.wrapping_add(rhs.0);
    }
}

impl Sub for RingElement {
    type Output = RingElement;
    fn sub(self, rhs: Self) -> Self {
        RingElement(self.0.wrapping_sub(rhs.0))
    }
}

impl SubAssign for RingElement {
    fn sub_assign(&mut self, rhs: Self) {
        self.0 = self.0.wrapping_sub(rhs.0);
    }
}

impl Mul for RingElement {
    type Output = RingElement;
    fn mul(self, rhs: Self) -> Self {
        RingElement(self.0.wrapping_mul(rhs.0))
    }
}

impl Neg for RingElement {
    type Output = RingElement;
    fn neg(self) -> Self {
        RingElement(self.0.wrapping_neg())
    }
}

pub fn ring_add(a: RingElement, b: RingElement) -> RingElement {
    a + b
}

pub fn ring_sub(a: RingElement, b: RingElement) -> RingElement {
    a - b
}

pub fn ring_mul(a: RingElement, b: RingElement) -> RingElement {
    a * b
}

pub fn ring_neg(a: RingElement) -> RingElement {
    -a
}

/// Fixed-point interpretation: `f` fractional bits inside an `l`-bit ring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedEncoding {
    ring_bits: u32,
    frac_bits: u32,
}

impl Default for FixedEncoding {
    fn default() -> Self {
        FixedEncoding {
            ring_bits: 64,
            frac_bits: 18,
        }
    }
}

impl FixedEncoding {
    /// Requires `2f < l <= 64` so that one product fits before truncation.
    pub fn new(ring_bits: u32, frac_bits: u32) -> Result<Self> {
        if !(8..=64).contains(&ring_bits) {
            return Err(Error::Argument(format!(
                "ring_bits must lie in 8..=64, got {ring_bits}"
            )));
        }
        if frac_bits == 0 || 2 * frac_bits >= ring_bits {
            return Err(Error::Argument(format!(
                "fraction_bits must satisfy 0 < f < l/2 (l={ring_bits}, f={frac_bits})"
            )));
        }
        Ok(FixedEncoding {
            ring_bits,
            frac_bits,
        })
    }

    pub fn ring_bits(&self) -> u32 {
        self.ring_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Bit mask selecting the low `l` bits.
    pub fn mask(&self) -> u64 {
        if self.ring_bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.ring_bits) - 1
        }
    }

    pub fn reduce(&self, x: u64) -> u64 {
        x & self.mask()
    }

    /// Value of one unit in the last place.
    pub fn lsb(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// Exclusive bound on the magnitude of encodable reals, `2^(l-f-1)`.
    pub fn max_abs(&self) -> f64 {
        ((self.ring_bits - self.frac_bits - 1) as f64).exp2()
    }

    /// Two's-complement reading of the low `l` bits.
    pub fn to_signed(&self, x: RingElement) -> i64 {
        let shift = 64 - self.ring_bits;
        ((x.0 << shift) as i64) >> shift
    }

    pub fn msb(&self, x: RingElement) -> bool {
        (x.0 >> (self.ring_bits - 1)) & 1 == 1
    }

    /// `round(r * 2^f) mod 2^l`, rounding half away from zero.
    pub fn encode(&self, r: f64) -> Result<RingElement> {
        let limit = self.max_abs();
        if !r.is_finite() || r.abs() >= limit {
            return Err(Error::Range { value: r, limit });
        }
        Ok(RingElement(self.encode_scaled(r, self.frac_bits)))
    }

    /// Encodes a public constant with an arbitrary number of fractional bits.
    /// Wraps silently; callers choose `bits` so the product stays in range.
    pub fn encode_scaled(&self, r: f64, bits: u32) -> u64 {
        let scaled = (r * (bits as f64).exp2()).round() as i128;
        self.reduce(scaled as u64)
    }

    pub fn decode(&self, x: RingElement) -> f64 {
        self.to_signed(x) as f64 * self.lsb()
    }

    /// Arithmetic right shift of the signed reading by `bits`.
    pub fn truncate_local(&self, x: RingElement, bits: u32) -> RingElement {
        RingElement(self.reduce((self.to_signed(x) >> bits) as u64))
    }

    pub fn encode_slice(&self, values: &[f64]) -> Result<Vec<RingElement>> {
        values.iter().map(|&v| self.encode(v)).collect()
    }

    pub fn decode_slice(&self, values: &[RingElement]) -> Vec<f64> {
        values.iter().map(|&v| self.decode(v)).collect()
    }

    /// Number of fractional bits to give public coefficients so that
    /// `sum |c_k * x_k|` up to `2^headroom` still fits below `2^(l-2)` before
    /// truncation. Never less than `f`.
    pub fn coeff_bits(&self, headroom: u32) -> u32 {
        self.ring_bits
            .saturating_sub(self.frac_bits + 2 + headroom)
            .max(self.frac_bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn enc() -> FixedEncoding {
        FixedEncoding::default()
    }

    #[test]
    fn encode_examples() {
        assert_eq!(enc().encode(0.0).unwrap(), RingElement(0));
        assert_eq!(enc().encode(1.0).unwrap(), RingElement(262_144));
        assert_eq!(
            enc().encode(-1.0).unwrap(),
            RingElement(0u64.wrapping_sub(262_144))
        );
    }

    #[test]
    fn encode_rejects_out_of_range() {
        let e = enc();
        assert!(matches!(e.encode(e.max_abs()), Err(Error::Range { .. })));
        assert!(matches!(e.encode(f64::NAN), Err(Error::Range { .. })));
        assert!(e.encode(e.max_abs() - 1.0).is_ok());
    }

    #[test]
    fn decode_examples() {
        assert_eq!(enc().decode(RingElement(262_144)), 1.0);
        assert_eq!(enc().decode(RingElement(0)), 0.0);
        let x = enc().encode(3.5).unwrap();
        assert!((enc().decode(x) - 3.5).abs() <= 2f64.powi(-19));
    }

    #[test]
    fn ring_op_examples() {
        assert_eq!(
            ring_add(RingElement(u64::MAX), RingElement(1)),
            RingElement(0)
        );
        assert_eq!(ring_neg(RingElement(5)), RingElement(u64::MAX - 4));
        let e = enc();
        let p = ring_mul(e.encode(2.0).unwrap(), e.encode(3.0).unwrap());
        assert_eq!(p, RingElement(e.encode(6.0).unwrap().0 << 18));
        assert_eq!(e.truncate_local(p, 18), e.encode(6.0).unwrap());
        assert_eq!(e.truncate_local(RingElement(0), 18), RingElement(0));
    }

    #[test]
    fn truncate_negative_product_matches_rational_oracle() {
        // exact oracle: floor((-2.5 * 2^18) * 2^18 / 2^18) in integers
        let e = enc();
        let x = e.encode(-2.5).unwrap();
        let scaled = ring_mul(x, RingElement(1 << 18));
        let expected: i128 = (-2.5f64 * 262_144.0) as i128;
        let got = e.to_signed(e.truncate_local(scaled, 18)) as i128;
        assert!((got - expected).abs() <= 1);
    }

    #[test]
    fn small_ring_sign_extension() {
        let e = FixedEncoding::new(40, 12).unwrap();
        let x = e.encode(-3.25).unwrap();
        assert_eq!(x.0 >> 40, 0);
        assert_eq!(e.decode(x), -3.25);
        assert!(e.msb(x));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(FixedEncoding::new(64, 32).is_err());
        assert!(FixedEncoding::new(65, 18).is_err());
        assert!(FixedEncoding::new(64, 0).is_err());
    }

    #[test]
    fn roundtrip_dense_grid() {
        let e = enc();
        let tol = 2f64.powi(-19);
        for i in 0..=200_000 {
            let r = -100.0 + i as f64 * 1e-3;
            let back = e.decode(e.encode(r).unwrap());
            assert!((back - r).abs() <= tol, "r={r} back={back}");
        }
    }

    proptest! {
        #[test]
        fn fixed_addition_is_exact(a in -1.0e6f64..1.0e6, b in -1.0e6f64..1.0e6) {
            let e = enc();
            let (ea, eb) = (e.encode(a).unwrap(), e.encode(b).unwrap());
            let sum = e.decode(ring_add(ea, eb));
            prop_assert_eq!(sum, e.decode(ea) + e.decode(eb));
        }

        #[test]
        fn truncated_product_error_bound(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let e = enc();
            let p = e.truncate_local(ring_mul(e.encode(a).unwrap(), e.encode(b).unwrap()), 18);
            prop_assert!((e.decode(p) - a * b).abs() <= 2f64.powi(-17));
        }
    }
}
