//! Two-server secure arithmetic over protected ring values.
//!
//! A backend is held by the ciphertext-holding server (no key) and realizes
//! addition, subtraction, constant multiplication locally; multiplication,
//! rescaling, division, square root, and comparison through one-round
//! blinded exchanges with the key-holding server, which only ever sees
//! blinded values (plus the one comparison bit per sign query). Composite
//! kernels — Cholesky, triangular solve, inversion — are built from the
//! elementary operations and therefore run unchanged on either backend.
//!
//! [`reference::ReferenceBackend`] implements the identical contract with
//! plaintext fixed-point arithmetic and the same truncation semantics, so
//! it serves as the oracle: results agree with the encrypted backend within
//! one unit in the last place per elementary operation.

mod blinded;
mod reference;

pub use blinded::{BlindedChannel, DirectChannel, EncryptedBackend, KeyService, OpKind, TranscriptEntry};
pub use reference::ReferenceBackend;

use num_bigint::BigUint;
use thiserror::Error;

use crate::fixedpoint::{EncodedValue, FixedPointError, FixedPointParams};

#[derive(Debug, Error)]
pub enum SecureError {
    #[error("operand outside its legal domain: {0}")]
    Domain(String),
    #[error("value escaped the representable band")]
    Range,
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error("cryptographic failure: {0}")]
    Crypto(#[from] crate::paillier::PaillierError),
    #[error("blinded exchange failed: {0}")]
    Exchange(String),
}

/// A ring element under the backend's protection: a ciphertext for the
/// encrypted backend, the bare encoded value for the reference backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecVal(pub(crate) BigUint);

impl SecVal {
    pub fn from_uint(v: BigUint) -> Self {
        Self(v)
    }

    pub fn as_uint(&self) -> &BigUint {
        &self.0
    }
}

/// Per-session operation ledger. Counters only ever increase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    /// Ciphertext additions and subtractions (negation included).
    pub adds: u64,
    /// Multiplications by plaintext constants.
    pub scalar_muls: u64,
    /// Ciphertext-by-ciphertext multiplications.
    pub sec_muls: u64,
    /// Rescaling truncations.
    pub truncates: u64,
    /// Divisions.
    pub divs: u64,
    /// Square roots.
    pub sqrts: u64,
    /// Comparison bits released.
    pub signs: u64,
    /// Matrix factorizations performed.
    pub choleskys: u64,
    /// Values opened toward the ciphertext holder (blinded decryptions).
    pub reveals: u64,
    /// Decryptions performed at the key holder on our behalf.
    pub key_decryptions: u64,
    /// Request/response exchanges with the key holder.
    pub rounds: u64,
}

/// Dense matrix of protected values, row major.
#[derive(Debug, Clone)]
pub struct SecMatrix {
    rows: usize,
    cols: usize,
    data: Vec<SecVal>,
}

impl SecMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> SecVal) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &SecVal {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: SecVal) {
        self.data[r * self.cols + c] = v;
    }
}

/// The secure-arithmetic contract shared by the encrypted and reference
/// backends. All fixed-point operands carry the backend's configured scale
/// unless a wider scale is explicitly threaded by the caller (products
/// before truncation, staged comparisons).
pub trait SecureBackend {
    fn params(&self) -> &FixedPointParams;

    fn counters(&self) -> OpCounters;

    #[doc(hidden)]
    fn counters_mut(&mut self) -> &mut OpCounters;

    /// Protects a value the backend holder already knows (aggregation
    /// constants, regularization terms, unit vectors).
    fn from_plain(&mut self, m: &EncodedValue) -> Result<SecVal, SecureError>;

    fn sec_add(&mut self, a: &SecVal, b: &SecVal) -> Result<SecVal, SecureError>;

    fn sec_sub(&mut self, a: &SecVal, b: &SecVal) -> Result<SecVal, SecureError>;

    fn sec_neg(&mut self, a: &SecVal) -> Result<SecVal, SecureError>;

    /// Ring multiplication by a known constant. No rescaling: multiplying
    /// by an encoded constant raises the operand's scale by the constant's.
    fn sec_scalar_mul(&mut self, a: &SecVal, k: &BigUint) -> Result<SecVal, SecureError>;

    /// Fixed-point product of two protected values, rescaled back to the
    /// working scale.
    fn sec_mul(&mut self, a: &SecVal, b: &SecVal) -> Result<SecVal, SecureError>;

    /// Floor-divides the protected value by `2^shift_bits` (within one unit).
    fn sec_truncate(&mut self, a: &SecVal, shift_bits: u32) -> Result<SecVal, SecureError>;

    /// Fixed-point quotient; both operands must be strictly positive, which
    /// every call site (Cholesky pivots, triangular diagonals) guarantees.
    fn sec_div(&mut self, a: &SecVal, b: &SecVal) -> Result<SecVal, SecureError>;

    /// Fixed-point square root of a strictly positive operand.
    fn sec_sqrt(&mut self, a: &SecVal) -> Result<SecVal, SecureError>;

    /// Releases exactly one bit: whether the signed value is strictly
    /// positive. Zero compares false.
    fn sec_sign(&mut self, d: &SecVal) -> Result<bool, SecureError>;

    /// Opens a protected value toward the backend holder through additive
    /// blinding; the key holder sees only the blinded ring element.
    fn reveal(&mut self, a: &SecVal) -> Result<EncodedValue, SecureError>;

    /// Element-wise Cholesky factorization of a protected symmetric
    /// positive-definite matrix: exactly one square root per pivot, one
    /// division per strictly-lower entry, and the textbook cubic number of
    /// products. A non-positive pivot (checked via one comparison bit per
    /// column) aborts.
    fn sec_cholesky(&mut self, a: &SecMatrix) -> Result<SecMatrix, SecureError> {
        let p = a.rows();
        if a.cols() != p {
            return Err(SecureError::Dimension {
                expected: p,
                actual: a.cols(),
            });
        }
        self.counters_mut().choleskys += 1;
        let zero = self.protected_zero()?;
        let mut l = SecMatrix::from_fn(p, p, |_, _| zero.clone());
        for j in 0..p {
            let mut pivot = a.get(j, j).clone();
            for k in 0..j {
                let sq = self.sec_mul(l.get(j, k), l.get(j, k))?;
                pivot = self.sec_sub(&pivot, &sq)?;
            }
            if !self.sec_sign(&pivot)? {
                return Err(SecureError::NotPositiveDefinite { pivot: j });
            }
            let diag = self.sec_sqrt(&pivot)?;
            l.set(j, j, diag.clone());
            for i in (j + 1)..p {
                let mut s = a.get(i, j).clone();
                for k in 0..j {
                    let prod = self.sec_mul(l.get(i, k), l.get(j, k))?;
                    s = self.sec_sub(&s, &prod)?;
                }
                let entry = self.sec_div(&s, &diag)?;
                l.set(i, j, entry);
            }
        }
        Ok(l)
    }

    /// Solves `L L' x = g` by forward then backward substitution over
    /// protected values.
    fn sec_back_substitute(
        &mut self,
        l: &SecMatrix,
        g: &[SecVal],
    ) -> Result<Vec<SecVal>, SecureError> {
        let p = l.rows();
        if g.len() != p {
            return Err(SecureError::Dimension {
                expected: p,
                actual: g.len(),
            });
        }
        let mut z: Vec<SecVal> = Vec::with_capacity(p);
        for i in 0..p {
            let mut s = g[i].clone();
            for (k, zk) in z.iter().enumerate().take(i) {
                let prod = self.sec_mul(l.get(i, k), zk)?;
                s = self.sec_sub(&s, &prod)?;
            }
            z.push(self.sec_div(&s, l.get(i, i))?);
        }
        let mut x: Vec<Option<SecVal>> = vec![None; p];
        for i in (0..p).rev() {
            let mut s = z[i].clone();
            for (k, xk) in x.iter().enumerate().skip(i + 1) {
                let prod = self.sec_mul(l.get(k, i), xk.as_ref().expect("filled"))?;
                s = self.sec_sub(&s, &prod)?;
            }
            x[i] = Some(self.sec_div(&s, l.get(i, i))?);
        }
        Ok(x.into_iter().map(|v| v.expect("filled")).collect())
    }

    /// Inverts `L L'` from its Cholesky factor, one unit-vector solve per
    /// column. The right-hand sides and the symmetry of the inverse are
    /// public structure, so each solve skips the leading zero prefix and
    /// stops once it reaches entries mirrored from earlier columns.
    fn sec_invert(&mut self, l: &SecMatrix) -> Result<SecMatrix, SecureError> {
        let p = l.rows();
        let zero = self.protected_zero()?;
        let one = {
            let params = self.params().clone();
            let enc = crate::fixedpoint::encode(1.0, &params)?;
            self.from_plain(&enc)?
        };
        let mut m = SecMatrix::from_fn(p, p, |_, _| zero.clone());
        for col in 0..p {
            // forward sweep: rhs = e_col, so z_i = 0 for i < col
            let mut z: Vec<SecVal> = vec![zero.clone(); p];
            z[col] = self.sec_div(&one, l.get(col, col))?;
            for i in (col + 1)..p {
                let mut s = zero.clone();
                for (k, zk) in z.iter().enumerate().take(i).skip(col) {
                    let prod = self.sec_mul(l.get(i, k), zk)?;
                    s = self.sec_sub(&s, &prod)?;
                }
                z[i] = self.sec_div(&s, l.get(i, i))?;
            }
            // backward sweep, stopping at the diagonal: rows above it come
            // from the symmetry of the inverse
            let mut x: Vec<Option<SecVal>> = vec![None; p];
            for i in (col..p).rev() {
                let mut s = z[i].clone();
                for (k, xk) in x.iter().enumerate().skip(i + 1) {
                    let prod = self.sec_mul(l.get(k, i), xk.as_ref().expect("filled"))?;
                    s = self.sec_sub(&s, &prod)?;
                }
                x[i] = Some(self.sec_div(&s, l.get(i, i))?);
            }
            for i in col..p {
                let v = x[i].clone().expect("filled");
                m.set(i, col, v.clone());
                m.set(col, i, v);
            }
        }
        Ok(m)
    }

    #[doc(hidden)]
    fn protected_zero(&mut self) -> Result<SecVal, SecureError> {
        let params = self.params().clone();
        let enc = crate::fixedpoint::encode(0.0, &params)?;
        self.from_plain(&enc)
    }
}

/// Exact operation counts for one `p x p` Cholesky factorization under the
/// default kernel; used by the counter-soundness checks.
pub fn cholesky_expected_counts(p: u64) -> (u64, u64, u64, u64) {
    let sqrts = p;
    let divs = p * (p - 1) / 2;
    // pivot updates contribute j products at column j; off-diagonals k<j each
    let muls = (0..p).map(|j| j + (p - 1 - j) * j).sum::<u64>();
    let signs = p;
    (sqrts, divs, muls, signs)
}
