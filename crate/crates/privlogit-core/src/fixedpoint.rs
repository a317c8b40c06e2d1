//! Fixed-point encoding of reals into the encryption plaintext ring.
//!
//! Values are scaled by `2^frac_bits`, rounded, and wrapped modulo the ring
//! size `N`; the upper half of the ring carries negatives. Encoding is exact
//! dyadic arithmetic on the float's mantissa, so the only error anywhere is
//! the final rounding to the grid. Products pick up a factor of
//! `2^frac_bits` and are brought back to scale by a floor division that the
//! secure truncation subprotocol mirrors bit for bit (up to its documented
//! one-unit blinding slack).

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

pub const DEFAULT_FRAC_BITS: u32 = 32;
pub const DEFAULT_INT_BITS: u32 = 64;
pub const DEFAULT_STAT_SEC_BITS: u32 = 40;

#[derive(Debug, Error)]
pub enum FixedPointError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("value {0} out of the representable range")]
    Range(f64),
    #[error("raw ring value exceeds the product band")]
    RawRange,
    #[error("ring value lies in the dead band between representable magnitudes")]
    Corruption,
    #[error("input is not finite")]
    NotFinite,
}

/// Scale, magnitude, and blinding configuration tied to one ring modulus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedPointParams {
    frac_bits: u32,
    int_bits: u32,
    stat_sec_bits: u32,
    modulus: BigUint,
    half_modulus: BigUint,
}

impl FixedPointParams {
    /// Requires room in the ring for one product of encoded values plus
    /// additive blinding: `2 (int_bits + frac_bits) + stat_sec_bits + 2`
    /// bits must fit below the modulus (checked with extra working margin).
    pub fn new(
        frac_bits: u32,
        int_bits: u32,
        stat_sec_bits: u32,
        modulus: BigUint,
    ) -> Result<Self, FixedPointError> {
        if frac_bits < 1 {
            return Err(FixedPointError::InvalidParams(
                "frac_bits must be >= 1".into(),
            ));
        }
        let needed = 2 * (int_bits + frac_bits) + stat_sec_bits + 2;
        if u64::from(needed) >= modulus.bits() {
            return Err(FixedPointError::InvalidParams(format!(
                "modulus too small: need more than {needed} bits, have {}",
                modulus.bits()
            )));
        }
        // Internal subprotocols stack an offset and one extra blinding on a
        // product; keep a little slack beyond the contract minimum.
        if u64::from(needed) + 14 >= modulus.bits() {
            return Err(FixedPointError::InvalidParams(
                "modulus leaves no working margin above the product band".into(),
            ));
        }
        let half_modulus = &modulus >> 1;
        Ok(Self {
            frac_bits,
            int_bits,
            stat_sec_bits,
            modulus,
            half_modulus,
        })
    }

    pub fn with_modulus(modulus: BigUint) -> Result<Self, FixedPointError> {
        Self::new(
            DEFAULT_FRAC_BITS,
            DEFAULT_INT_BITS,
            DEFAULT_STAT_SEC_BITS,
            modulus,
        )
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn int_bits(&self) -> u32 {
        self.int_bits
    }

    pub fn stat_sec_bits(&self) -> u32 {
        self.stat_sec_bits
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    /// Signed representative in `(-N/2, N/2]`, negatives drawn from the
    /// upper half of the ring.
    pub fn signed(&self, v: &BigUint) -> BigInt {
        if v * 2u8 >= self.modulus {
            BigInt::from(v.clone()) - BigInt::from(self.modulus.clone())
        } else {
            BigInt::from(v.clone())
        }
    }

    /// Wraps a signed integer back into `[0, N)`.
    pub fn wrap(&self, v: &BigInt) -> BigUint {
        let m = BigInt::from(self.modulus.clone());
        let r = v.mod_floor(&m);
        r.to_biguint().expect("mod_floor is non-negative")
    }

    /// Largest bit length any legitimate intermediate (one product plus the
    /// positivity offset) can reach.
    pub fn product_band_bits(&self) -> u32 {
        2 * (self.int_bits + self.frac_bits) + 2
    }
}

/// A plaintext-ring element carrying a fixed-point value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedValue(BigUint);

impl EncodedValue {
    pub fn from_uint(v: BigUint, params: &FixedPointParams) -> Result<Self, FixedPointError> {
        if v >= *params.modulus() {
            return Err(FixedPointError::RawRange);
        }
        Ok(Self(v))
    }

    pub fn as_uint(&self) -> &BigUint {
        &self.0
    }

    pub fn into_uint(self) -> BigUint {
        self.0
    }
}

/// Exact mantissa/exponent split: `x == m * 2^e` for finite `x`.
fn dyadic_parts(x: f64) -> (i64, i32) {
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { -1i64 } else { 1i64 };
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if raw_exp == 0 {
        (sign * frac as i64, -1074)
    } else {
        (sign * (frac | (1u64 << 52)) as i64, raw_exp - 1075)
    }
}

/// `round(x * 2^frac_bits) mod N`, with ties rounded away from zero.
pub fn encode(x: f64, params: &FixedPointParams) -> Result<EncodedValue, FixedPointError> {
    if !x.is_finite() {
        return Err(FixedPointError::NotFinite);
    }
    if x.abs() >= (2.0f64).powi(params.int_bits as i32) {
        return Err(FixedPointError::Range(x));
    }
    let (m, e) = dyadic_parts(x);
    let shift = e + params.frac_bits as i32;
    let scaled: BigInt = if shift >= 0 {
        BigInt::from(m) << shift as usize
    } else {
        let t = (-shift) as usize;
        let mag = BigInt::from(m.unsigned_abs());
        let rounded = (mag + (BigInt::from(1u8) << (t - 1))) >> t;
        if m < 0 {
            -rounded
        } else {
            rounded
        }
    };
    Ok(EncodedValue(params.wrap(&scaled)))
}

/// Inverse of [`encode`] up to grid rounding. Ring values between the
/// positive and negative magnitude bands signal a protocol bug or overflow.
pub fn decode(e: &EncodedValue, params: &FixedPointParams) -> Result<f64, FixedPointError> {
    decode_scaled(e, params, params.frac_bits())
}

/// Decodes a value carrying `frac_bits` fractional bits (products before
/// rescale carry twice the configured amount). The accepted band widens
/// with the scale.
pub fn decode_scaled(
    e: &EncodedValue,
    params: &FixedPointParams,
    frac_bits: u32,
) -> Result<f64, FixedPointError> {
    let s = params.signed(e.as_uint());
    let band_bits = params.int_bits + frac_bits;
    let band = BigInt::from(1u8) << band_bits as usize;
    if s.abs() > band {
        return Err(FixedPointError::Corruption);
    }
    let approx = s.to_f64().ok_or(FixedPointError::Corruption)?;
    Ok(approx / (2.0f64).powi(frac_bits as i32))
}

/// Rescales the raw ring product of two encoded values back to the working
/// scale by a floor division (toward negative infinity) of the signed
/// representative.
pub fn product_scale_correction(
    raw: &EncodedValue,
    params: &FixedPointParams,
) -> Result<EncodedValue, FixedPointError> {
    scale_correction(raw, params, params.frac_bits())
}

/// Floor-divides the signed representative by `2^shift_bits` and re-wraps.
pub fn scale_correction(
    raw: &EncodedValue,
    params: &FixedPointParams,
    shift_bits: u32,
) -> Result<EncodedValue, FixedPointError> {
    let s = params.signed(raw.as_uint());
    let band = BigInt::from(1u8) << params.product_band_bits() as usize;
    if s.abs() > band {
        return Err(FixedPointError::RawRange);
    }
    let div = BigInt::from(1u8) << shift_bits as usize;
    let q = s.div_floor(&div);
    Ok(EncodedValue(params.wrap(&q)))
}

/// Ring addition of encoded values; reals add exactly while the sum stays
/// in range.
pub fn add(a: &EncodedValue, b: &EncodedValue, params: &FixedPointParams) -> EncodedValue {
    EncodedValue((a.as_uint() + b.as_uint()) % params.modulus())
}

pub fn sub(a: &EncodedValue, b: &EncodedValue, params: &FixedPointParams) -> EncodedValue {
    let m = params.modulus();
    EncodedValue((a.as_uint() + (m - b.as_uint() % m)) % m)
}

pub fn neg(a: &EncodedValue, params: &FixedPointParams) -> EncodedValue {
    if a.as_uint().is_zero() {
        return a.clone();
    }
    EncodedValue(params.modulus() - a.as_uint())
}

/// Raw ring product (no rescale); pair with [`product_scale_correction`].
pub fn mul_raw(a: &EncodedValue, b: &EncodedValue, params: &FixedPointParams) -> EncodedValue {
    EncodedValue((a.as_uint() * b.as_uint()) % params.modulus())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;
    use proptest::prelude::*;

    fn params() -> FixedPointParams {
        // A convenient power-of-two test modulus; real sessions use the
        // Paillier modulus.
        FixedPointParams::with_modulus(BigUint::one() << 512).unwrap()
    }

    #[test]
    fn params_reject_small_modulus() {
        let err = FixedPointParams::with_modulus(BigUint::one() << 200);
        assert!(err.is_err());
        assert!(FixedPointParams::new(0, 8, 8, BigUint::one() << 512).is_err());
    }

    #[test]
    fn encode_exact_values() {
        let p = params();
        assert!(encode(0.0, &p).unwrap().as_uint().is_zero());
        let v = encode(1.5, &p).unwrap();
        assert_eq!(*v.as_uint(), BigUint::from(3u8) << 31);
        let v = encode(-1.0, &p).unwrap();
        assert_eq!(*v.as_uint(), p.modulus() - (BigUint::one() << 32));
    }

    #[test]
    fn decode_known_values() {
        let p = params();
        let m = EncodedValue::from_uint(p.modulus() - (BigUint::one() << 32), &p).unwrap();
        assert_eq!(decode(&m, &p).unwrap(), -1.0);
        let z = EncodedValue::from_uint(BigUint::zero(), &p).unwrap();
        assert_eq!(decode(&z, &p).unwrap(), 0.0);
        let pi = encode(std::f64::consts::PI, &p).unwrap();
        let back = decode(&pi, &p).unwrap();
        assert!((back - std::f64::consts::PI).abs() <= (2.0f64).powi(-33));
    }

    #[test]
    fn decode_rejects_dead_band() {
        let p = params();
        // halfway through the ring, far above any representable magnitude
        let mid = EncodedValue::from_uint(p.modulus() >> 1, &p).unwrap();
        assert!(matches!(
            decode(&mid, &p),
            Err(FixedPointError::Corruption)
        ));
    }

    #[test]
    fn encode_range_errors() {
        let p = params();
        assert!(matches!(
            encode((2.0f64).powi(64), &p),
            Err(FixedPointError::Range(_))
        ));
        assert!(matches!(
            encode(f64::INFINITY, &p),
            Err(FixedPointError::NotFinite)
        ));
    }

    #[test]
    fn product_correction_hand_cases() {
        let p = params();
        let a = encode(2.0, &p).unwrap();
        let b = encode(3.0, &p).unwrap();
        let c = product_scale_correction(&mul_raw(&a, &b, &p), &p).unwrap();
        let expect = encode(6.0, &p).unwrap();
        let diff = p.signed(c.as_uint()) - p.signed(expect.as_uint());
        assert!(diff.abs() <= BigInt::one(), "diff {diff}");

        let a = encode(-1.5, &p).unwrap();
        let b = encode(2.0, &p).unwrap();
        let c = product_scale_correction(&mul_raw(&a, &b, &p), &p).unwrap();
        assert!((decode(&c, &p).unwrap() - (-3.0)).abs() <= (2.0f64).powi(-31));
    }

    #[test]
    fn product_correction_rejects_overflow_band() {
        let p = params();
        let huge = EncodedValue::from_uint(BigUint::one() << 300, &p).unwrap();
        assert!(matches!(
            scale_correction(&huge, &p, 32),
            Err(FixedPointError::RawRange)
        ));
    }

    proptest! {
        #[test]
        fn round_trip_within_half_ulp(x in -1.0e15f64..1.0e15) {
            let p = params();
            let e = encode(x, &p).unwrap();
            let back = decode(&e, &p).unwrap();
            prop_assert!((back - x).abs() <= (2.0f64).powi(-33) + x.abs() * 1e-15);
        }

        #[test]
        fn addition_is_homomorphic(a in -1.0e9f64..1.0e9, b in -1.0e9f64..1.0e9) {
            let p = params();
            let ea = encode(a, &p).unwrap();
            let eb = encode(b, &p).unwrap();
            let sum = decode(&add(&ea, &eb, &p), &p).unwrap();
            prop_assert!((sum - (a + b)).abs() <= (2.0f64).powi(-32) + (a + b).abs() * 1e-15);
        }

        #[test]
        fn negation_mirrors_ring(x in 1.0f64..1.0e12) {
            let p = params();
            // exact-grid x: snap to the grid first
            let e = encode(x, &p).unwrap();
            let back = decode(&e, &p).unwrap();
            let en = encode(-back, &p).unwrap();
            prop_assert_eq!(en.as_uint().clone(), p.modulus() - e.as_uint());
        }

        #[test]
        fn random_products_track_real_arithmetic(
            a in -1048576.0f64..1048576.0,
            b in -1048576.0f64..1048576.0,
        ) {
            let p = params();
            let ea = encode(a, &p).unwrap();
            let eb = encode(b, &p).unwrap();
            let c = product_scale_correction(&mul_raw(&ea, &eb, &p), &p).unwrap();
            let got = decode(&c, &p).unwrap();
            let tol = (2.0f64).powi(-30) + (a * b).abs() * 1e-9;
            prop_assert!((got - a * b).abs() <= tol, "got {got}, want {}", a * b);
        }
    }
}
