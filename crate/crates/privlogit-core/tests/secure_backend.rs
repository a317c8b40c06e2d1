//! Secure-arithmetic layer checks: elementary operations against their
//! stated tolerances, encrypted-versus-reference agreement, composite
//! kernels against the plaintext solver, counter soundness, and the shape
//! of what the key holder gets to see.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use privlogit_core::fixedpoint::{decode, encode, FixedPointParams};
use privlogit_core::logit;
use privlogit_core::paillier::{decrypt, encrypt, keygen, Ciphertext, KeyPair};
use privlogit_core::secure::{
    cholesky_expected_counts, DirectChannel, EncryptedBackend, KeyService, OpKind,
    ReferenceBackend, SecMatrix, SecVal, SecureBackend, SecureError,
};

fn test_keys() -> &'static KeyPair {
    static KEYS: std::sync::OnceLock<KeyPair> = std::sync::OnceLock::new();
    KEYS.get_or_init(|| {
        let mut rng = ChaCha20Rng::seed_from_u64(0xbacc);
        keygen(1024, &mut rng).unwrap()
    })
}

fn backends() -> (EncryptedBackend<DirectChannel>, ReferenceBackend) {
    let kp = test_keys();
    let params = FixedPointParams::with_modulus(kp.public.modulus().clone()).unwrap();
    let service = KeyService::new(kp.private.clone(), params.clone(), 11);
    let enc = EncryptedBackend::new(kp.public.clone(), params.clone(), 22, DirectChannel::new(service));
    let reference = ReferenceBackend::new(params);
    (enc, reference)
}

fn protect<B: SecureBackend + ?Sized>(b: &mut B, x: f64) -> SecVal {
    let e = encode(x, &b.params().clone()).unwrap();
    b.from_plain(&e).unwrap()
}

fn open<B: SecureBackend + ?Sized>(b: &mut B, v: &SecVal) -> f64 {
    let e = b.reveal(v).unwrap();
    decode(&e, b.params()).unwrap()
}

fn open_encrypted(enc: &mut EncryptedBackend<DirectChannel>, v: &SecVal) -> f64 {
    let e = enc.reveal(v).unwrap();
    decode(&e, enc.params()).unwrap()
}

#[test]
fn protected_values_decrypt_through_the_key() {
    // sanity: the encrypted backend's values really are ciphertexts
    let kp = test_keys();
    let (mut enc, _) = backends();
    let v = protect(&mut enc, 42.25);
    let ct = Ciphertext::from_uint(v.as_uint().clone(), &kp.public).unwrap();
    let m = decrypt(&kp.private, &ct).unwrap();
    let e = privlogit_core::fixedpoint::EncodedValue::from_uint(m, enc.params()).unwrap();
    assert_eq!(decode(&e, enc.params()).unwrap(), 42.25);
}

#[test]
fn multiplication_within_tolerance() {
    let (mut enc, mut reference) = backends();
    for b in [&mut enc as &mut dyn SecureBackend, &mut reference] {
        let x = protect(b, 6.0);
        let y = protect(b, 7.0);
        let z = b.sec_mul(&x, &y).unwrap();
        let got = open(b, &z);
        assert!((got - 42.0).abs() <= (2.0f64).powi(-31), "{got}");

        let zero = protect(b, 0.0);
        let z = b.sec_mul(&x, &zero).unwrap();
        assert!(open(b, &z).abs() <= (2.0f64).powi(-31));
    }
}

#[test]
fn randomized_products_match_reference_within_two_ulps() {
    let (mut enc, mut reference) = backends();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let ulp = (2.0f64).powi(-32);
    for _ in 0..60 {
        let a = rng.gen_range(-1048576.0..1048576.0);
        let b = rng.gen_range(-1048576.0..1048576.0);
        let (xa, xb) = (protect(&mut enc, a), protect(&mut enc, b));
        let (ra, rb) = (protect(&mut reference, a), protect(&mut reference, b));
        let pe = enc.sec_mul(&xa, &xb).unwrap();
        let pr = reference.sec_mul(&ra, &rb).unwrap();
        let ge = open_encrypted(&mut enc, &pe);
        let gr = open(&mut reference, &pr);
        assert!(
            (ge - gr).abs() <= 2.0 * ulp,
            "encrypted {ge} vs reference {gr}"
        );
        assert!((gr - a * b).abs() <= (2.0f64).powi(-30) + (a * b).abs() * 1e-9);
    }
}

#[test]
fn truncation_floor_semantics() {
    let (mut enc, mut reference) = backends();
    let params = enc.params().clone();
    let f = params.frac_bits();
    // raw double-scaled value 6 * 2^(2f)
    let raw = SecVal::from_uint(BigUint::from(6u8) << (2 * f));
    let r = reference.sec_truncate(&raw, f).unwrap();
    assert_eq!(open(&mut reference, &r), 6.0);

    // 2^(2f) + 1 floors to 2^f
    let raw = SecVal::from_uint((BigUint::from(1u8) << (2 * f)) + 1u8);
    let r = reference.sec_truncate(&raw, f).unwrap();
    assert_eq!(open(&mut reference, &r), 1.0);

    // encrypted side may sit one unit above the floor, never below
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    for _ in 0..40 {
        let a = rng.gen_range(-3000.0..3000.0);
        let b = rng.gen_range(-3000.0..3000.0);
        let ea = encode(a, &params).unwrap();
        let eb = encode(b, &params).unwrap();
        let raw = privlogit_core::fixedpoint::mul_raw(&ea, &eb, &params);
        let rv = SecVal::from_uint(raw.as_uint().clone());
        let expect = privlogit_core::fixedpoint::product_scale_correction(&raw, &params).unwrap();
        let ref_out = reference.sec_truncate(&rv, f).unwrap();
        assert_eq!(ref_out.as_uint(), expect.as_uint(), "reference is exact floor");

        let enc_raw = privlogit_core::fixedpoint::EncodedValue::from_uint(
            raw.as_uint().clone(),
            &params,
        )
        .unwrap();
        let enc_in = enc.from_plain(&enc_raw).unwrap();
        let enc_out = enc.sec_truncate(&enc_in, f).unwrap();
        let got = open_encrypted(&mut enc, &enc_out);
        let want = decode(&expect, &params).unwrap();
        let diff = got - want;
        assert!(
            (0.0..=(2.0f64).powi(-(f as i32))).contains(&diff) || diff.abs() < 1e-15,
            "floor slack out of range: {diff}"
        );
    }
}

#[test]
fn division_examples_and_domain() {
    let (mut enc, mut reference) = backends();
    for b in [&mut enc as &mut dyn SecureBackend, &mut reference] {
        let x = protect(b, 42.0);
        let y = protect(b, 6.0);
        let q = b.sec_div(&x, &y).unwrap();
        assert!((open(b, &q) - 7.0).abs() <= (2.0f64).powi(-30));

        let q = b.sec_div(&x, &x).unwrap();
        assert!((open(b, &q) - 1.0).abs() <= (2.0f64).powi(-30));

        let neg = protect(b, -1.0);
        assert!(matches!(
            b.sec_div(&x, &neg),
            Err(SecureError::Domain(_))
        ));
        let zero = protect(b, 0.0);
        assert!(matches!(b.sec_div(&x, &zero), Err(SecureError::Domain(_))));
    }
}

#[test]
fn randomized_quotients_track_reference() {
    let (mut enc, mut reference) = backends();
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    for _ in 0..40 {
        let a = rng.gen_range(0.01..2000.0);
        let b = rng.gen_range(0.25..400.0);
        let ge = {
            let (x, y) = (protect(&mut enc, a), protect(&mut enc, b));
            let q = enc.sec_div(&x, &y).unwrap();
            open_encrypted(&mut enc, &q)
        };
        let gr = {
            let (x, y) = (protect(&mut reference, a), protect(&mut reference, b));
            let q = reference.sec_div(&x, &y).unwrap();
            open(&mut reference, &q)
        };
        assert!(
            (ge - gr).abs() <= (2.0f64).powi(-28),
            "a={a} b={b}: {ge} vs {gr}"
        );
        assert!((gr - a / b).abs() <= (2.0f64).powi(-28) + (a / b).abs() * 1e-9);
    }
}

#[test]
fn square_roots() {
    let (mut enc, mut reference) = backends();
    for b in [&mut enc as &mut dyn SecureBackend, &mut reference] {
        let nine = protect(b, 9.0);
        let r = b.sec_sqrt(&nine).unwrap();
        assert!((open(b, &r) - 3.0).abs() <= (2.0f64).powi(-14));

        let one = protect(b, 1.0);
        let r = b.sec_sqrt(&one).unwrap();
        assert!((open(b, &r) - 1.0).abs() <= (2.0f64).powi(-14));

        let neg = protect(b, -4.0);
        assert!(matches!(b.sec_sqrt(&neg), Err(SecureError::Domain(_))));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(41);
    for _ in 0..30 {
        let a = rng.gen_range(1e-3..1e6);
        let x = protect(&mut enc, a);
        let got = {
            let r = enc.sec_sqrt(&x).unwrap();
            open_encrypted(&mut enc, &r)
        };
        assert!(
            (got - a.sqrt()).abs() <= (2.0f64).powi(-12),
            "sqrt({a}) = {got}"
        );
    }
}

#[test]
fn sign_releases_strict_positivity() {
    let (mut enc, mut reference) = backends();
    for b in [&mut enc as &mut dyn SecureBackend, &mut reference] {
        let pos = protect(b, 0.5);
        let neg = protect(b, -0.5);
        let zero = protect(b, 0.0);
        assert!(b.sec_sign(&pos).unwrap());
        assert!(!b.sec_sign(&neg).unwrap());
        assert!(!b.sec_sign(&zero).unwrap());
    }
}

fn protect_matrix<B: SecureBackend + ?Sized>(b: &mut B, m: &DMatrix<f64>) -> SecMatrix {
    SecMatrix::from_fn(m.nrows(), m.ncols(), |r, c| protect(b, m[(r, c)]))
}

fn open_matrix<B: SecureBackend + ?Sized>(b: &mut B, m: &SecMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |r, c| open(b, m.get(r, c)))
}

#[test]
fn cholesky_against_plaintext_oracle() {
    let (mut enc, _) = backends();
    let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
    let sec_a = protect_matrix(&mut enc, &a);
    let l = enc.sec_cholesky(&sec_a).unwrap();
    let got = open_matrix(&mut enc, &l);
    let want = logit::cholesky(&a).unwrap();
    assert!((got.clone() - want.matrix()).amax() < 1e-4, "{got}");

    let id = DMatrix::identity(3, 3);
    let sec_id = protect_matrix(&mut enc, &id);
    let l = enc.sec_cholesky(&sec_id).unwrap();
    assert!((open_matrix(&mut enc, &l) - id).amax() < 1e-6);

    let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    let sec_bad = protect_matrix(&mut enc, &indefinite);
    assert!(matches!(
        enc.sec_cholesky(&sec_bad),
        Err(SecureError::NotPositiveDefinite { .. })
    ));
}

fn random_spd(rng: &mut ChaCha20Rng, p: usize) -> DMatrix<f64> {
    // curvature-shaped input: X'X/4 + lambda I for standard-normal X
    let n = 40 * p;
    let x = DMatrix::from_fn(n, p, |_, _| {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    });
    x.transpose() * x * 0.25 + DMatrix::identity(p, p) * 0.5
}

#[test]
fn random_spd_cholesky_encrypted_vs_oracle() {
    let (mut enc, _) = backends();
    let mut rng = ChaCha20Rng::seed_from_u64(55);
    let a = random_spd(&mut rng, 6);
    let sec_a = protect_matrix(&mut enc, &a);
    let l = enc.sec_cholesky(&sec_a).unwrap();
    let got = open_matrix(&mut enc, &l);
    let want = logit::cholesky(&a).unwrap();
    assert!(
        (got - want.matrix()).amax() < 1e-4,
        "6x6 factor disagrees with the plaintext oracle"
    );
}

#[test]
fn back_substitution_matches_solver() {
    let (mut enc, _) = backends();

    let id = DMatrix::identity(2, 2);
    let l = { let __m = protect_matrix(&mut enc, &id); enc.sec_cholesky(&__m) }.unwrap();
    let g = vec![protect(&mut enc, 3.0), protect(&mut enc, 4.0)];
    let x = enc.sec_back_substitute(&l, &g).unwrap();
    assert!((open_encrypted(&mut enc, &x[0]) - 3.0).abs() < 1e-6);
    assert!((open_encrypted(&mut enc, &x[1]) - 4.0).abs() < 1e-6);

    let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
    let l = { let __m = protect_matrix(&mut enc, &a); enc.sec_cholesky(&__m) }.unwrap();
    let g = vec![protect(&mut enc, 4.0), protect(&mut enc, 3.0)];
    let x = enc.sec_back_substitute(&l, &g).unwrap();
    let oracle = logit::solve_via_cholesky(
        &logit::cholesky(&a).unwrap(),
        &DVector::from_vec(vec![4.0, 3.0]),
    )
    .unwrap();
    for i in 0..2 {
        assert!((open_encrypted(&mut enc, &x[i]) - oracle[i]).abs() < 1e-3);
    }

    let mut rng = ChaCha20Rng::seed_from_u64(70);
    let a = random_spd(&mut rng, 8);
    let rhs = DVector::from_fn(8, |_, _| rng.gen_range(-5.0..5.0));
    let l = { let __m = protect_matrix(&mut enc, &a); enc.sec_cholesky(&__m) }.unwrap();
    let g: Vec<SecVal> = (0..8).map(|i| protect(&mut enc, rhs[i])).collect();
    let x = enc.sec_back_substitute(&l, &g).unwrap();
    let oracle =
        logit::solve_via_cholesky(&logit::cholesky(&a).unwrap(), &rhs).unwrap();
    for i in 0..8 {
        let got = open_encrypted(&mut enc, &x[i]);
        assert!((got - oracle[i]).abs() < 1e-3, "row {i}: {got} vs {}", oracle[i]);
    }
}

#[test]
fn inversion_examples() {
    let (mut enc, _) = backends();

    let id = DMatrix::identity(3, 3);
    let l = { let __m = protect_matrix(&mut enc, &id); enc.sec_cholesky(&__m) }.unwrap();
    let inv = enc.sec_invert(&l).unwrap();
    assert!((open_matrix(&mut enc, &inv) - id).amax() < 1e-3);

    let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
    let l = { let __m = protect_matrix(&mut enc, &a); enc.sec_cholesky(&__m) }.unwrap();
    let inv = enc.sec_invert(&l).unwrap();
    let got = open_matrix(&mut enc, &inv);
    let want = DMatrix::from_row_slice(2, 2, &[0.375, -0.25, -0.25, 0.5]);
    assert!((got.clone() - want).amax() < 1e-3, "{got}");

    let mut rng = ChaCha20Rng::seed_from_u64(80);
    let a = random_spd(&mut rng, 5);
    let l = { let __m = protect_matrix(&mut enc, &a); enc.sec_cholesky(&__m) }.unwrap();
    let inv = enc.sec_invert(&l).unwrap();
    let prod = a * open_matrix(&mut enc, &inv);
    assert!(
        (prod - DMatrix::identity(5, 5)).amax() < 1e-2,
        "A * A^-1 drifted from the identity"
    );
}

#[test]
fn composite_kernels_agree_across_backends_at_p12() {
    let (mut enc, mut reference) = backends();
    let mut rng = ChaCha20Rng::seed_from_u64(90);
    let a = random_spd(&mut rng, 12);
    let rhs = DVector::from_fn(12, |_, _| rng.gen_range(-3.0..3.0));

    let le = { let __m = protect_matrix(&mut enc, &a); enc.sec_cholesky(&__m) }.unwrap();
    let lr = {
        let m = protect_matrix(&mut reference, &a);
        reference.sec_cholesky(&m).unwrap()
    };
    let ge: Vec<SecVal> = (0..12).map(|i| protect(&mut enc, rhs[i])).collect();
    let gr: Vec<SecVal> = (0..12).map(|i| protect(&mut reference, rhs[i])).collect();
    let xe = enc.sec_back_substitute(&le, &ge).unwrap();
    let xr = reference.sec_back_substitute(&lr, &gr).unwrap();
    for i in 0..12 {
        let a = open_encrypted(&mut enc, &xe[i]);
        let b = open(&mut reference, &xr[i]);
        assert!((a - b).abs() < 1e-3, "solution row {i}: {a} vs {b}");
    }
}

#[test]
fn counters_are_exact_and_identical_across_backends() {
    for p in 2..=12usize {
        let (mut enc, mut reference) = backends();
        let mut rng = ChaCha20Rng::seed_from_u64(100 + p as u64);
        let a = random_spd(&mut rng, p);
        { let __m = protect_matrix(&mut enc, &a); enc.sec_cholesky(&__m) }.unwrap();
        {
            let m = protect_matrix(&mut reference, &a);
            reference.sec_cholesky(&m).unwrap();
        }

        let (sqrts, divs, muls, signs) = cholesky_expected_counts(p as u64);
        let ce = enc.counters();
        let cr = reference.counters();
        assert_eq!(ce, cr, "backend counters diverge at p={p}");
        assert_eq!(ce.sqrts, sqrts);
        assert_eq!(ce.divs, divs);
        assert_eq!(ce.sec_muls, muls);
        assert_eq!(ce.signs, signs);
        assert_eq!(ce.choleskys, 1);
        // heavy-op floor from the recurrence shape
        assert!(ce.sec_muls + ce.divs + ce.sqrts >= (p * (p - 1) / 2 + p) as u64);
    }
}

#[test]
fn key_holder_sees_only_blinded_values_and_sign_bits() {
    // two same-shape inputs, same operation schedule
    let run = |values: [f64; 4]| {
        let (mut enc, _) = backends();
        let a = protect(&mut enc, values[0]);
        let b = protect(&mut enc, values[1]);
        let c = protect(&mut enc, values[2]);
        let d = protect(&mut enc, values[3]);
        let m = enc.sec_mul(&a, &b).unwrap();
        let q = enc.sec_div(&c, &d).unwrap();
        let s = enc.sec_sqrt(&d).unwrap();
        let _ = enc.sec_sign(&m).unwrap();
        let _ = enc.sec_sign(&q).unwrap();
        let _ = enc.reveal(&s).unwrap();
        let counters = enc.counters();
        let channel = enc.into_channel();
        (channel, counters)
    };
    let (ch1, c1) = run([3.5, -2.0, 9.0, 4.5]);
    let (ch2, c2) = run([-1.25, 0.75, 140.0, 2.0]);
    let t1 = ch1.service().transcript();
    let t2 = ch2.service().transcript();

    assert_eq!(c1, c2, "identical schedules must cost identically");
    assert_eq!(t1.len(), t2.len());
    let kp = test_keys();
    let params = FixedPointParams::with_modulus(kp.public.modulus().clone()).unwrap();
    let spread_bound = u64::from(params.product_band_bits() + params.stat_sec_bits()) + 2;
    for (e1, e2) in t1.iter().zip(t2) {
        assert_eq!(e1.kind, e2.kind, "operation schedule leaked data-dependence");
        assert_eq!(e1.decrypted_bits.len(), e2.decrypted_bits.len());
        for &bits in e1.decrypted_bits.iter().chain(&e2.decrypted_bits) {
            // additively blinded values span the whole ring; multiplicative
            // ones stay within the masked band
            let full_ring = matches!(e1.kind, OpKind::Mul | OpKind::Truncate | OpKind::Reveal);
            if !full_ring {
                assert!(
                    bits <= spread_bound,
                    "{:?} decrypted {bits} bits, above the masked band {spread_bound}",
                    e1.kind
                );
            }
        }
    }
    // the sign bits are the only allowed divergence
    let bits1: Vec<_> = t1.iter().filter_map(|e| e.sign_bit).collect();
    let bits2: Vec<_> = t2.iter().filter_map(|e| e.sign_bit).collect();
    assert_eq!(bits1.len(), 2);
    assert_eq!(bits2.len(), 2);

    // verify the decryption ledger the backend kept matches the service's
    assert_eq!(c1.key_decryptions, ch1.service().decryptions());
}
