use nalgebra::{DMatrix, DVector};
use paflow::linalg::{expm, std_form};
use paflow::symplectic::*;
use paflow::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

// Taylor series exponential, independent of the library routine.
fn taylor_exp(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let norm = max_abs(x) * n as f64;
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let y = x / 2f64.powi(s);
    let mut out = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..40 {
        term = &term * &y / k as f64;
        out += &term;
    }
    for _ in 0..s {
        out = &out * &out;
    }
    out
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-scale..scale));
    (&a + a.transpose()) * 0.5
}

fn random_hamiltonian(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> DMatrix<f64> {
    // X = Ω⁻¹ S with S symmetric satisfies XᵀΩ + ΩX = 0
    let j = std_form(m);
    j.clone().try_inverse().unwrap() * random_symmetric(rng, 2 * m, scale)
}

fn random_symplectic(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    taylor_exp(&random_hamiltonian(rng, m, 0.4))
}

fn eval_terms(terms: &[Term], ell: &DVector<f64>) -> f64 {
    terms.iter().map(|t| t.coeff * ell[t.i] * ell[t.j]).sum()
}

// ℓ_α = y, ℓ_β = -x in block coordinates.
fn lengths(sigma: &DVector<f64>) -> DVector<f64> {
    let m = sigma.len() / 2;
    DVector::from_fn(2 * m, |i, _| if i < m { sigma[m + i] } else { -sigma[i - m] })
}

fn quadratic(x: &DMatrix<f64>, sigma: &DVector<f64>) -> f64 {
    let m = sigma.len() / 2;
    let j = std_form(m);
    -0.5 * (x * sigma).dot(&(&j * sigma))
}

fn all_kinds() -> Vec<BlockKind> {
    let mut v = Vec::new();
    for &(l, th) in &[(2.0, 0.7), (1.3, 2.9), (5.0, 0.01)] {
        v.push(BlockKind::RealPair { lambda: l });
        v.push(BlockKind::UnitCircleSimple { theta: th });
        v.push(BlockKind::ComplexQuad { modulus: l, theta: th });
    }
    for &(l, th, s) in &[(2.0, 0.7, 1usize), (1.5, 1.9, 2), (3.0, 3.0, 3)] {
        v.push(BlockKind::RealJordan { lambda: l, size: s });
        v.push(BlockKind::ComplexJordan { modulus: l, theta: th, size: s });
        v.push(BlockKind::UnipotentLagrangian { size: s });
        v.push(BlockKind::UnitCircleLagrangian { theta: th, size: s });
        v.push(BlockKind::UnitCircleOddNoSplit { theta: th, size: 2 * s - 1 });
        v.push(BlockKind::UnitCircleEvenNoSplit { theta: th, size: 2 * s });
        v.push(BlockKind::UnipotentNonLagrangian { size: 2 * s });
    }
    v
}

#[test]
fn block_terms_match_quadratic_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for kind in all_kinds() {
        let (x, _) = block_generator(&kind).unwrap();
        let terms = block_terms(&kind).unwrap();
        for _ in 0..100 {
            let s = DVector::from_fn(x.nrows(), |_, _| rng.gen_range(-3.0..3.0));
            let (a, b) = (eval_terms(&terms, &lengths(&s)), quadratic(&x, &s));
            assert!((a - b).abs() < 1e-9, "{kind:?}: {a} vs {b}");
        }
    }
}

#[test]
fn block_generators_are_hamiltonian_and_exponentiate() {
    for kind in all_kinds() {
        let (x, b) = block_generator(&kind).unwrap();
        let m = x.nrows() / 2;
        let j = std_form(m);
        let res = max_abs(&(x.transpose() * &j + &j * &x));
        let exact = matches!(kind, BlockKind::UnipotentLagrangian { .. } | BlockKind::UnipotentNonLagrangian { .. });
        if exact {
            assert_eq!(res, 0.0, "{kind:?}");
        } else {
            assert!(res < 1e-12, "{kind:?} {res}");
        }
        let scale = max_abs(&b).max(1.0);
        assert!(max_abs(&(taylor_exp(&x) - &b)) / scale < 1e-10, "{kind:?}");
        assert!(max_abs(&(b.transpose() * &j * &b - &j)) / (scale * scale) < 1e-10, "{kind:?}");
    }
}

#[test]
fn size_one_real_jordan_is_real_pair() {
    let (x, _) = block_generator(&BlockKind::RealJordan { lambda: 2.0, size: 1 }).unwrap();
    let ln2 = 2f64.ln();
    assert!(max_abs(&(x - DMatrix::from_row_slice(2, 2, &[ln2, 0.0, 0.0, -ln2]))) < 1e-15);
}

#[test]
fn unipotent_exponential_is_finite_sum() {
    let (x, b) = block_generator(&BlockKind::UnipotentLagrangian { size: 2 }).unwrap();
    let expected = DMatrix::identity(4, 4) + &x;
    assert!(max_abs(&(&x * &x)) == 0.0);
    assert!(max_abs(&(b - expected)) < 1e-12);
}

#[test]
fn quarter_rotation() {
    let (_, b) = block_generator(&BlockKind::UnitCircleSimple { theta: PI / 2.0 }).unwrap();
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    assert!(max_abs(&(b - rot)) < 1e-14);
}

#[test]
fn eigenbasis_of_identity() {
    let j = std_form(2);
    let d = symplectic_eigenbasis(&DMatrix::identity(4, 4), &j, &EigenOptions::default()).unwrap();
    assert_eq!(d.blocks.len(), 2);
    for b in &d.blocks {
        assert_eq!(b.kind, BlockKind::UnitCircleSimple { theta: 0.0 });
    }
    assert!(d.symplectic_basis_residual(&j) < 1e-12);
}

#[test]
fn eigenbasis_of_diagonal() {
    let j = std_form(1);
    let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
    let d = symplectic_eigenbasis(&b, &j, &EigenOptions::default()).unwrap();
    assert_eq!(d.blocks[0].kind, BlockKind::RealPair { lambda: 2.0 });
    let (a, be) = (d.basis.column(0), d.basis.column(1));
    assert!(a[1].abs() < 1e-12 && be[0].abs() < 1e-12);
    assert!((a[0] * be[1] - 1.0).abs() < 1e-12);
}

#[test]
fn eigenbasis_of_rotation() {
    let th = PI / 3.0;
    let j = std_form(1);
    let b = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
    let d = symplectic_eigenbasis(&b, &j, &EigenOptions::default()).unwrap();
    let a = d.basis.column(0).into_owned();
    let be = d.basis.column(1).into_owned();
    let BlockKind::UnitCircleSimple { theta } = d.blocks[0].kind else { panic!() };
    assert!((theta - th).abs() < 1e-12);
    assert!((&b * &a - (th.cos() * &a + th.sin() * &be)).amax() < 1e-12);
    assert!(d.symplectic_basis_residual(&j) < 1e-12);
}

#[test]
fn eigenbasis_errors() {
    let j = std_form(1);
    let opts = EigenOptions::default();
    let neg = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -0.5]);
    assert!(matches!(symplectic_eigenbasis(&neg, &j, &opts), Err(Error::NegativeRealEigenvalue { .. })));
    let shear = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    assert!(matches!(symplectic_eigenbasis(&shear, &j, &opts), Err(Error::NotDiagonalizable { .. })));
    let bad = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
    assert!(matches!(symplectic_eigenbasis(&bad, &j, &opts), Err(Error::NotSymplectic { .. })));
}

// Conjugate a canonical block-diagonal map by a random symplectic P and recover the blocks.
#[test]
fn eigenbasis_recovers_conjugated_canonical_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let layouts = vec![
        vec![BlockKind::RealPair { lambda: 3.0 }, BlockKind::ComplexQuad { modulus: 1.7, theta: 1.1 }],
        vec![BlockKind::UnitCircleSimple { theta: 0.9 }, BlockKind::RealPair { lambda: 1.4 }, BlockKind::UnitCircleSimple { theta: 2.0 }],
        vec![BlockKind::ComplexQuad { modulus: 2.5, theta: 0.3 }, BlockKind::UnitCircleSimple { theta: -1.2 }],
        vec![BlockKind::RealPair { lambda: 6.0 }, BlockKind::RealPair { lambda: 2.0 }, BlockKind::RealPair { lambda: 1.2 }],
    ];
    for kinds in layouts {
        for _ in 0..5 {
            let n: usize = kinds.iter().map(|k| k.half_dim()).sum();
            let canon = BlockDecomposition::from_blocks(kinds.clone(), DMatrix::identity(2 * n, 2 * n)).unwrap();
            let p = random_symplectic(&mut rng, n);
            let b = &p * canon.canonical_b().unwrap() * p.clone().try_inverse().unwrap();
            let omega = std_form(n);
            let d = symplectic_eigenbasis(&b, &omega, &EigenOptions::default()).unwrap();
            assert!(d.symplectic_basis_residual(&omega) < 1e-8);
            assert!(d.canonical_residual(&b).unwrap() < 1e-8);
            let mut want: Vec<String> = kinds.iter().map(|k| k.name().to_string()).collect();
            let mut got: Vec<String> = d.blocks.iter().map(|b| b.kind.name().to_string()).collect();
            want.sort();
            got.sort();
            assert_eq!(want, got);
        }
    }
}

#[test]
fn eigenbasis_on_random_form() {
    // non-standard Ω: pull back by a random invertible G
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let g = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0)) + DMatrix::identity(4, 4) * 2.0;
        let omega = g.transpose() * std_form(2) * &g;
        let b0 = random_symplectic(&mut rng, 2);
        let ginv = g.clone().try_inverse().unwrap();
        let b = &ginv * b0 * &g;
        match symplectic_eigenbasis(&b, &omega, &EigenOptions::default()) {
            Ok(d) => {
                assert!(d.symplectic_basis_residual(&omega) < 1e-8);
                assert!(d.canonical_residual(&b).unwrap() < 1e-8);
            }
            Err(Error::NegativeRealEigenvalue { .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn principal_log_examples() {
    let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
    let g = principal_log(&d).unwrap();
    assert!((g.x[(0, 0)] - 2f64.ln()).abs() < 1e-14 && (g.x[(1, 1)] + 2f64.ln()).abs() < 1e-14);
    let th: f64 = 2.0;
    let r = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
    let g = principal_log(&r).unwrap();
    assert!(max_abs(&(g.x - DMatrix::from_row_slice(2, 2, &[0.0, -th, th, 0.0]))) < 1e-12);
}

#[test]
fn principal_log_random_battery() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..100 {
        let m = 1 + i % 4;
        let x = random_hamiltonian(&mut rng, m, 0.6);
        let b = taylor_exp(&x);
        let g = principal_log(&b).unwrap();
        let rel = max_abs(&(taylor_exp(&g.x) - &b)) / max_abs(&b);
        assert!(rel < 1e-8, "case {i}: {rel}");
        assert!(g.residual < 1e-9);
        assert!(g.hamiltonian_residual(&std_form(m)) < 1e-8, "case {i}");
    }
}

#[test]
fn principal_log_of_defective_blocks() {
    for kind in all_kinds() {
        let (x, b) = block_generator(&kind).unwrap();
        if x.nrows() > 8 {
            continue;
        }
        let g = principal_log(&b).unwrap();
        assert!(max_abs(&(expm(&g.x) - &b)) / max_abs(&b) < 1e-9, "{kind:?}");
    }
}

proptest! {
    #[test]
    fn generator_roundtrip(theta in 0.0f64..3.1, lam in 1.01f64..20.0) {
        let kinds = vec![BlockKind::RealPair { lambda: lam }, BlockKind::UnitCircleSimple { theta }];
        let d = BlockDecomposition::from_blocks(kinds, DMatrix::identity(4, 4)).unwrap();
        let x = d.ambient_x().unwrap();
        prop_assert!(max_abs(&(expm(&x) - d.canonical_b().unwrap())) < 1e-10 * lam);
    }

    #[test]
    fn block_kind_json_roundtrip(theta in 0.0f64..3.1, size in 1usize..5) {
        let k = BlockKind::UnitCircleLagrangian { theta, size };
        let s = serde_json::to_string(&k).unwrap();
        prop_assert!(s.contains("\"kind\":\"UnitCircleLagrangian\""));
        prop_assert_eq!(serde_json::from_str::<BlockKind>(&s).unwrap(), k);
    }
}
