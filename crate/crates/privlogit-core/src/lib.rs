//! Privacy-preserving distributed logistic regression.
//!
//! The crate is organized around four layers:
//!
//! * [`logit`] — plaintext model estimation: the exact Newton solver and the
//!   constant-Hessian solver that trades more (cheap) iterations for a
//!   one-time curvature factorization.
//! * [`fixedpoint`] — deterministic encoding of reals into the encryption
//!   plaintext ring with explicit precision bounds.
//! * [`paillier`] — additively homomorphic encryption with ciphertext
//!   addition, subtraction, and multiplication by plaintext constants.
//! * [`secure`] — a two-server secure arithmetic layer over ciphertexts
//!   (multiply, divide, square root, comparison, Cholesky, triangular solve,
//!   inversion) built from blinded-decryption subprotocols, plus a plaintext
//!   reference backend with identical semantics for oracle testing.
//! * [`protocol`] — the distributed sessions: party roles, wire format,
//!   transports, and the three protocol executions (constant-Hessian with
//!   central solves, constant-Hessian with node-local multiplication, and
//!   the per-iteration Newton baseline).

pub(crate) mod codec;
pub mod fixedpoint;
pub mod logit;
pub mod paillier;
pub mod protocol;
pub mod secure;
