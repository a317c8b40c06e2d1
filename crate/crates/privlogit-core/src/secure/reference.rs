//! Plaintext reference backend: the same contract and the same truncation
//! semantics as the encrypted backend, with zero cryptography. Counters
//! advance exactly as the encrypted backend's would, so complexity
//! assertions can run on either.

use num_bigint::BigUint;
use num_integer::{Integer, Roots};
use num_traits::{One, Zero};

use crate::fixedpoint::{EncodedValue, FixedPointParams};

use super::blinded::GUARD_BITS;
use super::{OpCounters, SecVal, SecureBackend, SecureError};

pub struct ReferenceBackend {
    params: FixedPointParams,
    counters: OpCounters,
}

impl ReferenceBackend {
    pub fn new(params: FixedPointParams) -> Self {
        Self {
            params,
            counters: OpCounters::default(),
        }
    }

    fn signed_in_band(&self, v: &SecVal, band_bits: u32) -> Result<num_bigint::BigInt, SecureError> {
        let s = self.params.signed(&v.0);
        let band = num_bigint::BigInt::one() << band_bits as usize;
        if num_traits::Signed::abs(&s) > band {
            return Err(SecureError::Range);
        }
        Ok(s)
    }

    fn positive_int(&self, v: &SecVal) -> Result<BigUint, SecureError> {
        if v.0.is_zero() || (&v.0 * 2u8) >= *self.params.modulus() {
            return Err(SecureError::Domain(
                "operand must be strictly positive".into(),
            ));
        }
        Ok(v.0.clone())
    }
}

impl SecureBackend for ReferenceBackend {
    fn params(&self) -> &FixedPointParams {
        &self.params
    }

    fn counters(&self) -> OpCounters {
        self.counters
    }

    fn counters_mut(&mut self) -> &mut OpCounters {
        &mut self.counters
    }

    fn from_plain(&mut self, m: &EncodedValue) -> Result<SecVal, SecureError> {
        Ok(SecVal(m.as_uint().clone()))
    }

    fn sec_add(&mut self, a: &SecVal, b: &SecVal) -> Result<SecVal, SecureError> {
        self.counters.adds += 1;
        Ok(SecVal((&a.0 + &b.0) % self.params.modulus()))
    }

    fn sec_sub(&mut self, a: &SecVal, b: &SecVal) -> Result<SecVal, SecureError> {
        self.counters.adds += 1;
        let n = self.params.modulus();
        Ok(SecVal((&a.0 + (n - &b.0 % n)) % n))
    }

    fn sec_neg(&mut self, a: &SecVal) -> Result<SecVal, SecureError> {
        self.counters.adds += 1;
        let n = self.params.modulus();
        if a.0.is_zero() {
            return Ok(a.clone());
        }
        Ok(SecVal(n - &a.0))
    }

    fn sec_scalar_mul(&mut self, a: &SecVal, k: &BigUint) -> Result<SecVal, SecureError> {
        self.counters.scalar_muls += 1;
        Ok(SecVal((&a.0 * k) % self.params.modulus()))
    }

    fn sec_mul(&mut self, a: &SecVal, b: &SecVal) -> Result<SecVal, SecureError> {
        self.counters.sec_muls += 1;
        self.counters.rounds += 1;
        self.counters.key_decryptions += 2;
        let raw = SecVal((&a.0 * &b.0) % self.params.modulus());
        self.sec_truncate(&raw, self.params.frac_bits())
    }

    fn sec_truncate(&mut self, a: &SecVal, shift_bits: u32) -> Result<SecVal, SecureError> {
        self.counters.truncates += 1;
        self.counters.rounds += 1;
        self.counters.key_decryptions += 1;
        let s = self.signed_in_band(a, self.params.product_band_bits())?;
        let q = s.div_floor(&(num_bigint::BigInt::one() << shift_bits as usize));
        Ok(SecVal(self.params.wrap(&q)))
    }

    fn sec_div(&mut self, a: &SecVal, b: &SecVal) -> Result<SecVal, SecureError> {
        self.counters.divs += 1;
        self.counters.rounds += 1;
        self.counters.key_decryptions += 2;
        let ai = self.positive_int(a)?;
        let bi = self.positive_int(b)?;
        let q_shift = self.params.frac_bits() + GUARD_BITS;
        let q = SecVal((ai << q_shift) / bi);
        let w = BigUint::one() << GUARD_BITS;
        let raw = self.sec_scalar_mul(&q, &w)?;
        self.sec_truncate(&raw, GUARD_BITS * 2)
    }

    fn sec_sqrt(&mut self, a: &SecVal) -> Result<SecVal, SecureError> {
        self.counters.sqrts += 1;
        self.counters.rounds += 1;
        self.counters.key_decryptions += 1;
        let ai = self.positive_int(a)?;
        let f = self.params.frac_bits();
        let s = SecVal((ai << f).sqrt());
        let w = BigUint::one() << (f + GUARD_BITS);
        let raw = self.sec_scalar_mul(&s, &w)?;
        self.sec_truncate(&raw, f + GUARD_BITS)
    }

    fn sec_sign(&mut self, d: &SecVal) -> Result<bool, SecureError> {
        self.counters.signs += 1;
        self.counters.rounds += 1;
        self.counters.key_decryptions += 1;
        Ok(!d.0.is_zero() && (&d.0 * 2u8) < *self.params.modulus())
    }

    fn reveal(&mut self, a: &SecVal) -> Result<EncodedValue, SecureError> {
        self.counters.reveals += 1;
        self.counters.rounds += 1;
        self.counters.key_decryptions += 1;
        Ok(EncodedValue::from_uint(a.0.clone(), &self.params)?)
    }
}
