use nalgebra::DMatrix;
use paflow::pa::*;
use paflow::rational::{q, q_to_f64, Q, QMat};
use paflow::tracks::*;
use paflow::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn genus2() -> TrainTrack {
    TrainTrack::from_json(include_str!("../data/genus2_track.json")).unwrap()
}

fn incidence() -> IncidenceMatrix {
    IncidenceMatrix::from_json(include_str!("../data/genus2_incidence.json")).unwrap()
}

// Exact characteristic polynomial coefficients c_0..c_n (monic, c_n = 1) by Faddeev-LeVerrier.
fn char_poly(a: &QMat) -> Vec<Q> {
    let n = a.nrows();
    let mut coeffs = vec![q(0); n + 1];
    coeffs[n] = q(1);
    let mut m = QMat::zeros(n, n);
    for k in 1..=n {
        let mut next = a.mul(&m);
        for i in 0..n {
            next[(i, i)] = &next[(i, i)] + &coeffs[n - k + 1];
        }
        m = next;
        let am = a.mul(&m);
        let tr: Q = (0..n).map(|i| am[(i, i)].clone()).sum();
        coeffs[n - k] = -tr / q(k as i64);
    }
    coeffs
}

fn eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

// Largest real root by bisection on [1, bound].
fn largest_root(c: &[f64]) -> f64 {
    let bound = 1.0 + c.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let n = 20000;
    let mut hi = bound;
    let mut lo = bound;
    for i in (0..n).rev() {
        let x = 1.0 + (bound - 1.0) * i as f64 / n as f64;
        if eval(c, x).signum() != eval(c, bound).signum() {
            lo = x;
            hi = x + (bound - 1.0) / n as f64;
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eval(c, mid).signum() == eval(c, lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn golden_example() {
    let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
    let (l, v) = perron_frobenius(&m).unwrap();
    assert!((l - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-10);
    assert!(v.iter().all(|x| *x > 0.0));
    assert!(((&m * &v) - l * &v).amax() < 1e-10);
}

#[test]
fn random_primitive_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut tested = 0;
    while tested < 50 {
        let m = DMatrix::from_fn(6, 6, |_, _| if rng.gen_bool(0.5) { rng.gen_range(1..4) as f64 } else { 0.0 });
        if primitivity_exponent(&m).is_none() {
            assert!(matches!(perron_frobenius(&m), Err(Error::NotPrimitive)));
            continue;
        }
        tested += 1;
        let (l, v) = perron_frobenius(&m).unwrap();
        // oracle: spectral radius from nalgebra's Schur decomposition
        let radius = m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((l - radius).abs() < 1e-9 * radius);
        assert!(v.iter().all(|x| *x > 0.0));
        assert!((v.sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn reducible_matrix_is_not_primitive() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    assert!(matches!(perron_frobenius(&m), Err(Error::NotPrimitive)));
    let perm = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    assert!(matches!(perron_frobenius(&perm), Err(Error::NotPrimitive)));
}

#[test]
fn shipped_example_matches_characteristic_polynomial() {
    let t = genus2();
    let pa = build_linear_action(&incidence(), &t, 1e-9).unwrap();
    let coeffs: Vec<f64> = char_poly(&pa.b_exact).iter().map(q_to_f64).collect();
    // palindromic: symplectic characteristic polynomials are self-reciprocal
    for i in 0..=6 {
        assert!((coeffs[i] - coeffs[6 - i]).abs() < 1e-12);
    }
    let root = largest_root(&coeffs);
    assert!((pa.lambda - root).abs() < 1e-9 * root, "{} vs {root}", pa.lambda);
    assert!(pa.lambda > 1.0);
    assert!(pa.reciprocal_residual() < 1e-8);
    assert!(pa.eigen_residual() < 1e-8);
    let min = pa.spectrum.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    assert!((pa.stretch_power() * min - 1.0).abs() < 1e-8);
    assert!(pa.mu_plus_branches.iter().all(|x| *x > 0.0));
}

#[test]
fn identity_incidence_is_not_pseudo_anosov() {
    let t = genus2();
    let id = IncidenceMatrix::identity(18, "genus2_track.json");
    assert!(matches!(build_linear_action(&id, &t, 1e-9), Err(Error::NotPseudoAnosov { .. })));
}

#[test]
fn power_doubles_past_negative_eigenvalues() {
    let b = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -0.5]);
    let (k, bk, spec) = settle_power(&b, 1e-9).unwrap();
    assert_eq!(k, 2);
    assert!((bk[(0, 0)] - 4.0).abs() < 1e-15);
    assert!(spec.iter().all(|z| z.re > 0.0));
    let ok = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
    assert_eq!(settle_power(&ok, 1e-9).unwrap().0, 1);
}

fn torus() -> TwistSystem {
    TwistSystem::from_json(include_str!("../data/torus_twists.json")).unwrap()
}

#[test]
fn torus_twist_word() {
    let m = twist_word_matrix(&torus(), &[(0, 1), (1, -1)]).unwrap();
    assert_eq!(m, DMatrix::from_row_slice(2, 2, &[2, 1, 1, 1]));
}

#[test]
fn sign_violations_are_rejected() {
    assert!(matches!(
        twist_word_matrix(&torus(), &[(0, -1)]),
        Err(Error::SignViolation { curve: 0, exponent: -1 })
    ));
}

#[test]
fn missing_curve_gives_non_primitive() {
    let m = twist_word_matrix(&torus(), &[(0, 3)]).unwrap();
    let f = m.map(|x| x as f64);
    assert!(matches!(perron_frobenius(&f), Err(Error::NotPrimitive)));
}

proptest! {
    #[test]
    fn word_times_reverse_inverse_is_identity(word in prop::collection::vec((0usize..2, 1i64..4), 1..8)) {
        let sys = torus();
        let word: Vec<(usize, i64)> = word.into_iter().map(|(c, e)| (c, sys.signs[c] as i64 * e)).collect();
        let m = twist_word_matrix(&sys, &word).unwrap();
        let inv = twist_word_matrix_unchecked(&sys, &reverse_inverse(&word)).unwrap();
        prop_assert_eq!(m * inv, DMatrix::<i64>::identity(2, 2));
    }

    #[test]
    fn positive_words_have_reciprocal_stretch(word in prop::collection::vec((0usize..2, 1i64..3), 2..6)) {
        let sys = torus();
        let mut word: Vec<(usize, i64)> = word.into_iter().map(|(c, e)| (c, sys.signs[c] as i64 * e)).collect();
        word.push((0, 1));
        word.push((1, -1));
        let m = twist_word_matrix(&sys, &word).unwrap().map(|x| x as f64);
        let (l, _) = perron_frobenius(&m).unwrap();
        let min = m.complex_eigenvalues().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        prop_assert!((l * min - 1.0).abs() < 1e-8);
    }
}
