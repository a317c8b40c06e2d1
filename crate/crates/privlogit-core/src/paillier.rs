//! Paillier cryptosystem in the `g = n + 1` variant with Carmichael-function
//! decryption: additively homomorphic, with ciphertext addition/subtraction
//! and multiplication by plaintext constants.
//!
//! The key holder keeps the prime factorization around so that decryption
//! and response re-encryption run over the half-size moduli (CRT); both
//! paths are checked against the textbook formula in the tests. Constant-time
//! arithmetic is not a goal here: the threat model is honest-but-curious
//! with no timing adversary.

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;
use thiserror::Error;

/// Modulus sizes accepted by key generation; 1024 is the CI/test size, the
/// larger sizes are for real runs.
pub const ALLOWED_KEY_BITS: [u32; 3] = [1024, 2048, 3072];

const MILLER_RABIN_ROUNDS: u32 = 32;

#[derive(Debug, Error)]
pub enum PaillierError {
    #[error("unsupported key size {0} (expected one of 1024, 2048, 3072)")]
    ParameterError(u32),
    #[error("prime generation failed after {0} attempts")]
    PrimeGeneration(u32),
    #[error("message outside the plaintext ring")]
    MessageOutOfRange,
    #[error("malformed ciphertext")]
    MalformedCiphertext,
    #[error("truncated or malformed serialized key material")]
    MalformedEncoding,
}

/// Public key: modulus `n` with `g = n + 1` fixed by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    nn: BigUint,
}

/// Secret key. Keeps the factorization and the derived values needed for
/// CRT decryption and fast re-encryption.
#[derive(Debug, Clone)]
pub struct PrivateKey {
    p: BigUint,
    q: BigUint,
    pp: BigUint,
    qq: BigUint,
    /// lcm(p-1, q-1)
    lambda: BigUint,
    /// (L(g^lambda mod n^2))^-1 mod n
    mu: BigUint,
    hp: BigUint,
    hq: BigUint,
    p_inv_q: BigUint,
    pp_inv_qq: BigUint,
    public: PublicKey,
}

#[derive(Debug, Clone)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

/// An element of `Z*_{n^2}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext(BigUint);

impl Ciphertext {
    pub fn from_uint(c: BigUint, pk: &PublicKey) -> Result<Self, PaillierError> {
        if c.is_zero() || c >= pk.nn {
            return Err(PaillierError::MalformedCiphertext);
        }
        Ok(Self(c))
    }

    pub fn as_uint(&self) -> &BigUint {
        &self.0
    }
}

impl PublicKey {
    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn modulus_squared(&self) -> &BigUint {
        &self.nn
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        crate::codec::put_biguint(&self.n)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PaillierError> {
        let (n, rest) =
            crate::codec::get_biguint(bytes).ok_or(PaillierError::MalformedEncoding)?;
        if !rest.is_empty() || n.bits() < 16 {
            return Err(PaillierError::MalformedEncoding);
        }
        let nn = &n * &n;
        Ok(Self { n, nn })
    }
}

impl PrivateKey {
    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = crate::codec::put_biguint(&self.p);
        out.extend(crate::codec::put_biguint(&self.q));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PaillierError> {
        let (p, rest) =
            crate::codec::get_biguint(bytes).ok_or(PaillierError::MalformedEncoding)?;
        let (q, rest) = crate::codec::get_biguint(rest).ok_or(PaillierError::MalformedEncoding)?;
        if !rest.is_empty() || p.bits() < 8 || q.bits() < 8 {
            return Err(PaillierError::MalformedEncoding);
        }
        Self::from_primes(p, q).ok_or(PaillierError::MalformedEncoding)
    }

    fn from_primes(p: BigUint, q: BigUint) -> Option<Self> {
        let n = &p * &q;
        let nn = &n * &n;
        let p1 = &p - 1u8;
        let q1 = &q - 1u8;
        let lambda = (&p1 * &q1) / p1.gcd(&q1);
        let mu = mod_inverse(&(&lambda % &n), &n)?;
        let pp = &p * &p;
        let qq = &q * &q;
        // L_p((1+n)^(p-1) mod p^2) reduces to (p-1)·q mod p
        let hp = mod_inverse(&((&p1 * &q) % &p), &p)?;
        let hq = mod_inverse(&((&q1 * &p) % &q), &q)?;
        let p_inv_q = mod_inverse(&(&p % &q), &q)?;
        let pp_inv_qq = mod_inverse(&(&pp % &qq), &qq)?;
        Some(Self {
            p,
            q,
            pp,
            qq,
            lambda,
            mu,
            hp,
            hq,
            p_inv_q,
            pp_inv_qq,
            public: PublicKey { n, nn },
        })
    }
}

/// Generates a fresh key pair. Primes are drawn at half the modulus size
/// with their top two bits forced, so the modulus has exactly `bits` bits;
/// pairs are filtered so the modulus is coprime to the Carmichael value
/// (required for decryption to be well defined). Deterministic for a seeded
/// randomness source.
pub fn keygen<R: RngCore>(bits: u32, rng: &mut R) -> Result<KeyPair, PaillierError> {
    if !ALLOWED_KEY_BITS.contains(&bits) {
        return Err(PaillierError::ParameterError(bits));
    }
    let half = u64::from(bits / 2);
    for _attempt in 0..64 {
        let p = gen_prime(half, rng)?;
        let q = gen_prime(half, rng)?;
        if p == q {
            continue;
        }
        let n = &p * &q;
        let lam = (&p - 1u8) * (&q - 1u8);
        if n.gcd(&lam) != BigUint::one() {
            continue;
        }
        debug_assert_eq!(n.bits(), u64::from(bits));
        if let Some(private) = PrivateKey::from_primes(p, q) {
            return Ok(KeyPair {
                public: private.public.clone(),
                private,
            });
        }
    }
    Err(PaillierError::PrimeGeneration(64))
}

/// `c = (n+1)^m · r^n mod n^2` with fresh random `r`. Probabilistic: two
/// encryptions of the same message differ.
pub fn encrypt<R: RngCore>(
    pk: &PublicKey,
    m: &BigUint,
    rng: &mut R,
) -> Result<Ciphertext, PaillierError> {
    if m >= &pk.n {
        return Err(PaillierError::MessageOutOfRange);
    }
    let r = rng.gen_biguint_range(&BigUint::one(), &pk.n);
    debug_assert!(r.gcd(&pk.n).is_one());
    let gm = (BigUint::one() + m * &pk.n) % &pk.nn;
    let rn = r.modpow(&pk.n, &pk.nn);
    Ok(Ciphertext((gm * rn) % &pk.nn))
}

/// Encryption on the key holder's side, using the factorization to do the
/// random-mask exponentiation over the half-size moduli.
pub fn encrypt_with_sk<R: RngCore>(
    sk: &PrivateKey,
    m: &BigUint,
    rng: &mut R,
) -> Result<Ciphertext, PaillierError> {
    let pk = &sk.public;
    if m >= &pk.n {
        return Err(PaillierError::MessageOutOfRange);
    }
    let r = rng.gen_biguint_range(&BigUint::one(), &pk.n);
    let gm_p = (BigUint::one() + m * &pk.n) % &sk.pp;
    let gm_q = (BigUint::one() + m * &pk.n) % &sk.qq;
    let cp = (gm_p * r.modpow(&pk.n, &sk.pp)) % &sk.pp;
    let cq = (gm_q * r.modpow(&pk.n, &sk.qq)) % &sk.qq;
    Ok(Ciphertext(crt_combine(
        &cp,
        &cq,
        &sk.pp,
        &sk.qq,
        &sk.pp_inv_qq,
    )))
}

/// Encryption with unit randomness: `1 + m·n`. Only for values the
/// ciphertext holder already knows (blinding terms, public constants);
/// the key holder decrypts whatever it receives regardless of randomness,
/// while parties without the key still cannot open products involving a
/// properly encrypted factor. Never used for node data submissions.
pub fn plaintext_ciphertext(pk: &PublicKey, m: &BigUint) -> Result<Ciphertext, PaillierError> {
    if m >= &pk.n {
        return Err(PaillierError::MessageOutOfRange);
    }
    Ok(Ciphertext((BigUint::one() + m * &pk.n) % &pk.nn))
}

fn l_function(x: &BigUint, n: &BigUint) -> BigUint {
    (x - 1u8) / n
}

/// Textbook decryption `m = L(c^lambda mod n^2) · mu mod n`. Validates ring
/// membership including coprimality.
pub fn decrypt(sk: &PrivateKey, c: &Ciphertext) -> Result<BigUint, PaillierError> {
    let pk = &sk.public;
    if c.0.is_zero() || c.0 >= pk.nn || !c.0.gcd(&pk.n).is_one() {
        return Err(PaillierError::MalformedCiphertext);
    }
    let x = c.0.modpow(&sk.lambda, &pk.nn);
    Ok((l_function(&x, &pk.n) * &sk.mu) % &pk.n)
}

/// CRT decryption; agrees with [`decrypt`] everywhere and is roughly four
/// times faster, so the key-holding server uses it on its hot path.
pub fn decrypt_crt(sk: &PrivateKey, c: &Ciphertext) -> Result<BigUint, PaillierError> {
    let pk = &sk.public;
    if c.0.is_zero() || c.0 >= pk.nn {
        return Err(PaillierError::MalformedCiphertext);
    }
    let cp = &c.0 % &sk.pp;
    let cq = &c.0 % &sk.qq;
    let mp = (l_function(&cp.modpow(&(&sk.p - 1u8), &sk.pp), &sk.p) * &sk.hp) % &sk.p;
    let mq = (l_function(&cq.modpow(&(&sk.q - 1u8), &sk.qq), &sk.q) * &sk.hq) % &sk.q;
    Ok(crt_combine(&mp, &mq, &sk.p, &sk.q, &sk.p_inv_q))
}

/// Ciphertext addition: `Dec(a ⊕ b) = Dec(a) + Dec(b) mod n`.
pub fn add_ct(pk: &PublicKey, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
    Ciphertext((&a.0 * &b.0) % &pk.nn)
}

/// Ciphertext subtraction via the modular inverse of `b`.
pub fn sub_ct(pk: &PublicKey, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, PaillierError> {
    let inv = mod_inverse(&b.0, &pk.nn).ok_or(PaillierError::MalformedCiphertext)?;
    Ok(Ciphertext((&a.0 * inv) % &pk.nn))
}

/// Plaintext negation of a ciphertext.
pub fn neg_ct(pk: &PublicKey, a: &Ciphertext) -> Result<Ciphertext, PaillierError> {
    let inv = mod_inverse(&a.0, &pk.nn).ok_or(PaillierError::MalformedCiphertext)?;
    Ok(Ciphertext(inv))
}

/// Multiplication by a plaintext constant: `Dec(a ⊙ k) = k · Dec(a) mod n`.
pub fn scalar_mul(pk: &PublicKey, a: &Ciphertext, k: &BigUint) -> Ciphertext {
    let k = k % &pk.n;
    if k.is_zero() {
        // exact encryption of zero with unit randomness
        return Ciphertext(BigUint::one());
    }
    Ciphertext(a.0.modpow(&k, &pk.nn))
}

pub(crate) fn crt_combine(
    rp: &BigUint,
    rq: &BigUint,
    p: &BigUint,
    q: &BigUint,
    p_inv_q: &BigUint,
) -> BigUint {
    // r = rp + p·((rq - rp)·p^{-1} mod q)
    let diff = ((BigInt::from(rq.clone()) - BigInt::from(rp.clone()))
        .mod_floor(&BigInt::from(q.clone())))
    .to_biguint()
    .expect("mod_floor non-negative");
    rp + p * ((diff * p_inv_q) % q)
}

pub(crate) fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    let e = BigInt::from(a.clone()).extended_gcd(&BigInt::from(m.clone()));
    if !e.gcd.is_one() {
        return None;
    }
    Some(e.x.mod_floor(&BigInt::from(m.clone())).to_biguint().unwrap())
}

fn small_primes() -> &'static [u32] {
    // primes below 1000 for candidate sieving
    static PRIMES: std::sync::OnceLock<Vec<u32>> = std::sync::OnceLock::new();
    PRIMES.get_or_init(|| {
        let mut sieve = vec![true; 1000];
        let mut out = Vec::new();
        for i in 2..1000usize {
            if sieve[i] {
                out.push(i as u32);
                let mut j = i * i;
                while j < 1000 {
                    sieve[j] = false;
                    j += i;
                }
            }
        }
        out
    })
}

fn gen_prime<R: RngCore>(bits: u64, rng: &mut R) -> Result<BigUint, PaillierError> {
    let top = (BigUint::one() << (bits - 1)) | (BigUint::one() << (bits - 2));
    for _ in 0..200_000u32 {
        let mut cand = rng.gen_biguint(bits) | &top;
        cand.set_bit(0, true);
        if small_primes()
            .iter()
            .any(|&sp| (&cand % sp).is_zero() && cand != BigUint::from(sp))
        {
            continue;
        }
        if miller_rabin(&cand, MILLER_RABIN_ROUNDS, rng) {
            return Ok(cand);
        }
    }
    Err(PaillierError::PrimeGeneration(200_000))
}

fn miller_rabin<R: RngCore>(n: &BigUint, rounds: u32, rng: &mut R) -> bool {
    let one = BigUint::one();
    let two = BigUint::from(2u8);
    if n < &two {
        return false;
    }
    let n1 = n - &one;
    let s = n1.trailing_zeros().unwrap_or(0);
    let d = &n1 >> s;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n1);
        let mut x = a.modpow(&d, n);
        if x == one || x == n1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
