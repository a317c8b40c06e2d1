//! The encrypted backend: Paillier ciphertexts at the holding server,
//! blinded-decryption exchanges with the key-holding server.
//!
//! Every exchange is strictly request/response. The key holder decrypts only
//! values masked additively over the whole ring (products, rescales, opens)
//! or multiplicatively with `stat_sec_bits` of spread over strictly positive
//! operands (quotients, roots, signs), and re-encrypts what it returns with
//! fresh randomness. Multiplicative masking of positive values leaks their
//! magnitude up to the mask spread; this is the documented cost of keeping
//! the whole stack inside one cryptosystem.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Roots;
use num_traits::{One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::codec::{get_biguint, put_biguint};
use crate::fixedpoint::{EncodedValue, FixedPointParams};
use crate::paillier::{
    add_ct, decrypt_crt, encrypt_with_sk, neg_ct, plaintext_ciphertext, scalar_mul, sub_ct,
    Ciphertext, PrivateKey, PublicKey,
};

use super::{OpCounters, SecVal, SecureBackend, SecureError};

/// Extra fractional bits carried by quotient and reciprocal intermediates so
/// the mask-correction rounding stays far below the output grid.
pub(crate) const GUARD_BITS: u32 = 48;

/// Closed set of blinded-exchange kinds, one byte each on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum OpKind {
    Mul = 1,
    Truncate = 2,
    Div = 3,
    Sqrt = 4,
    Sign = 5,
    Reveal = 6,
}

impl OpKind {
    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            1 => Self::Mul,
            2 => Self::Truncate,
            3 => Self::Div,
            4 => Self::Sqrt,
            5 => Self::Sign,
            6 => Self::Reveal,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub enum BlindedRequest {
    /// Decrypt both, multiply in the clear, re-encrypt.
    Mul { cx: BigUint, cy: BigUint },
    /// Decrypt, floor-divide by `2^shift_bits`, re-encrypt.
    Truncate { c: BigUint, shift_bits: u32 },
    /// Decrypt both positives, return the quotient at `q_shift` extra
    /// fractional bits.
    Div { ca: BigUint, cb: BigUint, q_shift: u32 },
    /// Decrypt a positive value at the working scale, return its square
    /// root at the working scale.
    Sqrt { c: BigUint },
    /// Decrypt, report strict positivity of the signed representative.
    Sign { c: BigUint },
    /// Decrypt and return the (blinded) ring element.
    Reveal { c: BigUint },
}

#[derive(Debug, Clone)]
pub enum BlindedResponse {
    Value(BigUint),
    Bit(bool),
    Plain(BigUint),
    Refused(String),
}

impl BlindedRequest {
    pub fn kind(&self) -> OpKind {
        match self {
            Self::Mul { .. } => OpKind::Mul,
            Self::Truncate { .. } => OpKind::Truncate,
            Self::Div { .. } => OpKind::Div,
            Self::Sqrt { .. } => OpKind::Sqrt,
            Self::Sign { .. } => OpKind::Sign,
            Self::Reveal { .. } => OpKind::Reveal,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.kind() as u8];
        match self {
            Self::Mul { cx, cy } => {
                out.extend(put_biguint(cx));
                out.extend(put_biguint(cy));
            }
            Self::Truncate { c, shift_bits } => {
                out.extend(shift_bits.to_be_bytes());
                out.extend(put_biguint(c));
            }
            Self::Div { ca, cb, q_shift } => {
                out.extend(q_shift.to_be_bytes());
                out.extend(put_biguint(ca));
                out.extend(put_biguint(cb));
            }
            Self::Sqrt { c } | Self::Sign { c } | Self::Reveal { c } => {
                out.extend(put_biguint(c));
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let (&kind, rest) = bytes.split_first()?;
        let kind = OpKind::from_byte(kind)?;
        Some(match kind {
            OpKind::Mul => {
                let (cx, rest) = get_biguint(rest)?;
                let (cy, rest) = get_biguint(rest)?;
                if !rest.is_empty() {
                    return None;
                }
                Self::Mul { cx, cy }
            }
            OpKind::Truncate => {
                let shift_bits = u32::from_be_bytes(rest.get(..4)?.try_into().ok()?);
                let (c, rest) = get_biguint(&rest[4..])?;
                if !rest.is_empty() {
                    return None;
                }
                Self::Truncate { c, shift_bits }
            }
            OpKind::Div => {
                let q_shift = u32::from_be_bytes(rest.get(..4)?.try_into().ok()?);
                let (ca, rest) = get_biguint(&rest[4..])?;
                let (cb, rest) = get_biguint(rest)?;
                if !rest.is_empty() {
                    return None;
                }
                Self::Div { ca, cb, q_shift }
            }
            OpKind::Sqrt => {
                let (c, rest) = get_biguint(rest)?;
                if !rest.is_empty() {
                    return None;
                }
                Self::Sqrt { c }
            }
            OpKind::Sign => {
                let (c, rest) = get_biguint(rest)?;
                if !rest.is_empty() {
                    return None;
                }
                Self::Sign { c }
            }
            OpKind::Reveal => {
                let (c, rest) = get_biguint(rest)?;
                if !rest.is_empty() {
                    return None;
                }
                Self::Reveal { c }
            }
        })
    }
}

impl BlindedResponse {
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Self::Value(v) => {
                let mut out = vec![1u8];
                out.extend(put_biguint(v));
                out
            }
            Self::Bit(b) => vec![2u8, u8::from(*b)],
            Self::Plain(v) => {
                let mut out = vec![3u8];
                out.extend(put_biguint(v));
                out
            }
            Self::Refused(msg) => {
                let mut out = vec![4u8];
                out.extend((msg.len() as u32).to_be_bytes());
                out.extend(msg.as_bytes());
                out
            }
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let (&tag, rest) = bytes.split_first()?;
        Some(match tag {
            1 => Self::Value(get_biguint(rest)?.0),
            2 => Self::Bit(*rest.first()? == 1),
            3 => Self::Plain(get_biguint(rest)?.0),
            4 => {
                let len = u32::from_be_bytes(rest.get(..4)?.try_into().ok()?) as usize;
                Self::Refused(String::from_utf8(rest.get(4..4 + len)?.to_vec()).ok()?)
            }
            _ => return None,
        })
    }
}

/// What the key holder observed for one exchange: the operation kind, the
/// bit lengths of the blinded values it decrypted, and the comparison bit
/// when one was released.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub kind: OpKind,
    pub decrypted_bits: Vec<u64>,
    pub sign_bit: Option<bool>,
}

/// The key-holding server's computation service: decrypt blinded values,
/// apply the requested plaintext step, re-encrypt.
pub struct KeyService {
    sk: PrivateKey,
    params: FixedPointParams,
    rng: ChaCha20Rng,
    transcript: Vec<TranscriptEntry>,
    decryptions: u64,
}

impl KeyService {
    pub fn new(sk: PrivateKey, params: FixedPointParams, seed: u64) -> Self {
        Self {
            sk,
            params,
            rng: ChaCha20Rng::seed_from_u64(seed),
            transcript: Vec::new(),
            decryptions: 0,
        }
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn decryptions(&self) -> u64 {
        self.decryptions
    }

    fn open(&mut self, c: &BigUint, seen: &mut Vec<u64>) -> Result<BigUint, SecureError> {
        let ct = Ciphertext::from_uint(c.clone(), self.sk.public())?;
        let m = decrypt_crt(&self.sk, &ct)?;
        self.decryptions += 1;
        seen.push(m.bits());
        Ok(m)
    }

    fn reencrypt(&mut self, m: &BigUint) -> Result<BigUint, SecureError> {
        Ok(encrypt_with_sk(&self.sk, m, &mut self.rng)?
            .as_uint()
            .clone())
    }

    pub fn handle(&mut self, req: &BlindedRequest) -> BlindedResponse {
        match self.handle_inner(req) {
            Ok(resp) => resp,
            Err(e) => BlindedResponse::Refused(e.to_string()),
        }
    }

    fn handle_inner(&mut self, req: &BlindedRequest) -> Result<BlindedResponse, SecureError> {
        let kind = req.kind();
        let mut seen = Vec::new();
        let mut sign_bit = None;
        let n = self.sk.public().modulus().clone();
        let resp = match req {
            BlindedRequest::Mul { cx, cy } => {
                let x = self.open(cx, &mut seen)?;
                let y = self.open(cy, &mut seen)?;
                let prod = (x * y) % &n;
                BlindedResponse::Value(self.reencrypt(&prod)?)
            }
            BlindedRequest::Truncate { c, shift_bits } => {
                let w = self.open(c, &mut seen)?;
                let q = w >> *shift_bits;
                BlindedResponse::Value(self.reencrypt(&q)?)
            }
            BlindedRequest::Div { ca, cb, q_shift } => {
                let a = self.open(ca, &mut seen)?;
                let b = self.open(cb, &mut seen)?;
                if positive_part(&a, &self.params).is_none()
                    || positive_part(&b, &self.params).is_none()
                {
                    return Err(SecureError::Domain(
                        "division requires strictly positive operands".into(),
                    ));
                }
                let q = (a << *q_shift) / b;
                BlindedResponse::Value(self.reencrypt(&q)?)
            }
            BlindedRequest::Sqrt { c } => {
                let m = self.open(c, &mut seen)?;
                if positive_part(&m, &self.params).is_none() {
                    return Err(SecureError::Domain(
                        "square root requires a strictly positive operand".into(),
                    ));
                }
                let s = (m << self.params.frac_bits()).sqrt();
                BlindedResponse::Value(self.reencrypt(&s)?)
            }
            BlindedRequest::Sign { c } => {
                let m = self.open(c, &mut seen)?;
                let positive = !m.is_zero() && (&m * 2u8) < n;
                sign_bit = Some(positive);
                BlindedResponse::Bit(positive)
            }
            BlindedRequest::Reveal { c } => {
                let m = self.open(c, &mut seen)?;
                BlindedResponse::Plain(m)
            }
        };
        self.transcript.push(TranscriptEntry {
            kind,
            decrypted_bits: seen,
            sign_bit,
        });
        Ok(resp)
    }
}

/// A strictly positive, non-wrapped value, or None.
fn positive_part(m: &BigUint, params: &FixedPointParams) -> Option<BigUint> {
    if m.is_zero() || (m * 2u8) >= *params.modulus() {
        None
    } else {
        Some(m.clone())
    }
}

/// The request/response path between the two servers. In-process callers
/// wrap a [`KeyService`] directly; distributed sessions route the encoded
/// bytes over the transport.
pub trait BlindedChannel {
    fn exchange(&mut self, req: &BlindedRequest) -> Result<BlindedResponse, SecureError>;
}

/// Same-process channel around a [`KeyService`].
pub struct DirectChannel {
    service: KeyService,
}

impl DirectChannel {
    pub fn new(service: KeyService) -> Self {
        Self { service }
    }

    pub fn service(&self) -> &KeyService {
        &self.service
    }
}

impl BlindedChannel for DirectChannel {
    fn exchange(&mut self, req: &BlindedRequest) -> Result<BlindedResponse, SecureError> {
        Ok(self.service.handle(req))
    }
}

/// The ciphertext-holding server's backend.
pub struct EncryptedBackend<C: BlindedChannel> {
    pk: PublicKey,
    params: FixedPointParams,
    rng: ChaCha20Rng,
    channel: C,
    counters: OpCounters,
}

impl<C: BlindedChannel> EncryptedBackend<C> {
    pub fn new(pk: PublicKey, params: FixedPointParams, seed: u64, channel: C) -> Self {
        debug_assert_eq!(params.modulus(), pk.modulus());
        Self {
            pk,
            params,
            rng: ChaCha20Rng::seed_from_u64(seed),
            channel,
            counters: OpCounters::default(),
        }
    }

    pub fn channel(&self) -> &C {
        &self.channel
    }

    pub fn into_channel(self) -> C {
        self.channel
    }

    fn ct(&self, v: &SecVal) -> Result<Ciphertext, SecureError> {
        Ok(Ciphertext::from_uint(v.0.clone(), &self.pk)?)
    }

    fn trivial(&self, m: &BigUint) -> Result<Ciphertext, SecureError> {
        Ok(plaintext_ciphertext(&self.pk, m)?)
    }

    fn exchange(&mut self, req: &BlindedRequest) -> Result<BlindedResponse, SecureError> {
        self.counters.rounds += 1;
        match self.channel.exchange(req)? {
            BlindedResponse::Refused(msg) => Err(SecureError::Domain(msg)),
            other => Ok(other),
        }
    }

    fn expect_value(resp: BlindedResponse) -> Result<BigUint, SecureError> {
        match resp {
            BlindedResponse::Value(v) => Ok(v),
            other => Err(SecureError::Exchange(format!(
                "unexpected response {other:?}"
            ))),
        }
    }

    /// Mask with `stat_sec_bits` of spread: uniform in `[2^(s-1), 2^s)`.
    fn positive_mask(&mut self) -> BigUint {
        let s = self.params.stat_sec_bits();
        let low = BigUint::one() << (s - 1);
        let high = BigUint::one() << s;
        self.rng.gen_biguint_range(&low, &high)
    }
}

impl<C: BlindedChannel> SecureBackend for EncryptedBackend<C> {
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
        Ok(SecVal(self.trivial(m.as_uint())?.as_uint().clone()))
    }

    fn sec_add(&mut self, a: &SecVal, b: &SecVal) -> Result<SecVal, SecureError> {
        self.counters.adds += 1;
        let c = add_ct(&self.pk, &self.ct(a)?, &self.ct(b)?);
        Ok(SecVal(c.as_uint().clone()))
    }

    fn sec_sub(&mut self, a: &SecVal, b: &SecVal) -> Result<SecVal, SecureError> {
        self.counters.adds += 1;
        let c = sub_ct(&self.pk, &self.ct(a)?, &self.ct(b)?)?;
        Ok(SecVal(c.as_uint().clone()))
    }

    fn sec_neg(&mut self, a: &SecVal) -> Result<SecVal, SecureError> {
        self.counters.adds += 1;
        let c = neg_ct(&self.pk, &self.ct(a)?)?;
        Ok(SecVal(c.as_uint().clone()))
    }

    fn sec_scalar_mul(&mut self, a: &SecVal, k: &BigUint) -> Result<SecVal, SecureError> {
        self.counters.scalar_muls += 1;
        let c = scalar_mul(&self.pk, &self.ct(a)?, k);
        Ok(SecVal(c.as_uint().clone()))
    }

    fn sec_mul(&mut self, a: &SecVal, b: &SecVal) -> Result<SecVal, SecureError> {
        self.counters.sec_muls += 1;
        let n = self.pk.modulus().clone();
        let r = self.rng.gen_biguint_below(&n);
        let s = self.rng.gen_biguint_below(&n);
        let cx = add_ct(&self.pk, &self.ct(a)?, &self.trivial(&r)?);
        let cy = add_ct(&self.pk, &self.ct(b)?, &self.trivial(&s)?);
        let resp = self.exchange(&BlindedRequest::Mul {
            cx: cx.as_uint().clone(),
            cy: cy.as_uint().clone(),
        })?;
        self.counters.key_decryptions += 2;
        let mut prod = Ciphertext::from_uint(Self::expect_value(resp)?, &self.pk)?;
        // (x+r)(y+s) - s·x - r·y - r·s = x·y
        prod = sub_ct(&self.pk, &prod, &scalar_mul(&self.pk, &self.ct(a)?, &s))?;
        prod = sub_ct(&self.pk, &prod, &scalar_mul(&self.pk, &self.ct(b)?, &r))?;
        prod = sub_ct(&self.pk, &prod, &self.trivial(&((r * s) % &n))?)?;
        self.sec_truncate(&SecVal(prod.as_uint().clone()), self.params.frac_bits())
    }

    fn sec_truncate(&mut self, a: &SecVal, shift_bits: u32) -> Result<SecVal, SecureError> {
        self.counters.truncates += 1;
        let band_bits = self.params.product_band_bits();
        let sigma = self.params.stat_sec_bits();
        // lift into the positives, then blind the quotient and the dropped bits
        let offset_q = BigUint::one() << (band_bits - shift_bits);
        let r_q = self
            .rng
            .gen_biguint((band_bits - shift_bits + sigma) as u64);
        let r_low = self.rng.gen_biguint(shift_bits as u64);
        let blind = ((&offset_q + &r_q) << shift_bits) + &r_low;
        let masked = add_ct(&self.pk, &self.ct(a)?, &self.trivial(&(blind % self.pk.modulus()))?);
        let resp = self.exchange(&BlindedRequest::Truncate {
            c: masked.as_uint().clone(),
            shift_bits,
        })?;
        self.counters.key_decryptions += 1;
        let q = Ciphertext::from_uint(Self::expect_value(resp)?, &self.pk)?;
        let correction = (offset_q + r_q) % self.pk.modulus();
        let out = sub_ct(&self.pk, &q, &self.trivial(&correction)?)?;
        Ok(SecVal(out.as_uint().clone()))
    }

    fn sec_div(&mut self, a: &SecVal, b: &SecVal) -> Result<SecVal, SecureError> {
        self.counters.divs += 1;
        let u = self.positive_mask();
        let v = self.positive_mask();
        let ca = scalar_mul(&self.pk, &self.ct(a)?, &u);
        let cb = scalar_mul(&self.pk, &self.ct(b)?, &v);
        let q_shift = self.params.frac_bits() + GUARD_BITS;
        let resp = self.exchange(&BlindedRequest::Div {
            ca: ca.as_uint().clone(),
            cb: cb.as_uint().clone(),
            q_shift,
        })?;
        self.counters.key_decryptions += 2;
        let q = SecVal(Self::expect_value(resp)?);
        // undo the u/v mask ratio at GUARD_BITS extra precision
        let w = ((v << GUARD_BITS) + (&u >> 1u32)) / u;
        let raw = self.sec_scalar_mul(&q, &w)?;
        self.sec_truncate(&raw, GUARD_BITS * 2)
    }

    fn sec_sqrt(&mut self, a: &SecVal) -> Result<SecVal, SecureError> {
        self.counters.sqrts += 1;
        let rho = self.positive_mask();
        let rho2 = &rho * &rho;
        let masked = scalar_mul(&self.pk, &self.ct(a)?, &rho2);
        let resp = self.exchange(&BlindedRequest::Sqrt {
            c: masked.as_uint().clone(),
        })?;
        self.counters.key_decryptions += 1;
        let s = SecVal(Self::expect_value(resp)?);
        let f = self.params.frac_bits();
        // 1/rho at f + GUARD_BITS fractional bits
        let w = ((BigUint::one() << (f + GUARD_BITS)) + (&rho >> 1u32)) / rho;
        let raw = self.sec_scalar_mul(&s, &w)?;
        self.sec_truncate(&raw, f + GUARD_BITS)
    }

    fn sec_sign(&mut self, d: &SecVal) -> Result<bool, SecureError> {
        self.counters.signs += 1;
        let rho = self.positive_mask();
        let masked = scalar_mul(&self.pk, &self.ct(d)?, &rho);
        let resp = self.exchange(&BlindedRequest::Sign {
            c: masked.as_uint().clone(),
        })?;
        self.counters.key_decryptions += 1;
        match resp {
            BlindedResponse::Bit(b) => Ok(b),
            other => Err(SecureError::Exchange(format!(
                "unexpected response {other:?}"
            ))),
        }
    }

    fn reveal(&mut self, a: &SecVal) -> Result<EncodedValue, SecureError> {
        self.counters.reveals += 1;
        let n = self.pk.modulus().clone();
        let r = self.rng.gen_biguint_below(&n);
        let masked = add_ct(&self.pk, &self.ct(a)?, &self.trivial(&r)?);
        let resp = self.exchange(&BlindedRequest::Reveal {
            c: masked.as_uint().clone(),
        })?;
        self.counters.key_decryptions += 1;
        let m = match resp {
            BlindedResponse::Plain(m) => m,
            other => {
                return Err(SecureError::Exchange(format!(
                    "unexpected response {other:?}"
                )))
            }
        };
        let unblinded = (m + (&n - r % &n)) % &n;
        Ok(EncodedValue::from_uint(unblinded, &self.params)?)
    }
}
