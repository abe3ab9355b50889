use nalgebra::{DMatrix, DVector};
use paflow::hamiltonian::*;
use paflow::linalg::{expm, std_form};
use paflow::pa::{build_linear_action, PseudoAnosovData};
use paflow::rational::{q, QMat};
use paflow::symplectic::{BlockDecomposition, BlockKind};
use paflow::tracks::*;
use paflow::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shipped() -> PseudoAnosovData {
    let t = TrainTrack::from_json(include_str!("../data/genus2_track.json")).unwrap();
    let m = IncidenceMatrix::from_json(include_str!("../data/genus2_incidence.json")).unwrap();
    build_linear_action(&m, &t, 1e-9).unwrap()
}

// Synthetic action data on the standard 2n-dimensional space.
fn synthetic(b: DMatrix<f64>, mu_plus: DVector<f64>) -> PseudoAnosovData {
    let n = b.nrows();
    PseudoAnosovData {
        k: 1,
        b_exact: QMat::identity(n),
        omega: SymplecticSpace::standard(n / 2),
        lambda: 1.0,
        mu_plus_branches: mu_plus.clone(),
        mu_plus,
        spectrum: vec![],
        tol: 1e-9,
        b,
    }
}

fn random_cone_point(rng: &mut ChaCha8Rng, p: &PotentialSpec) -> ShearPoint {
    let mut s = DVector::from_fn(p.dimension(), |_, _| rng.gen_range(-1.0..1.0));
    if p.witness(&s) < 0.0 {
        s = -s;
    }
    ShearPoint::new(s, &p.mu_plus, &p.omega).unwrap()
}

#[test]
fn lengths_are_bilinear() {
    let om = std_form(3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z = DVector::zeros(6);
    for _ in 0..20 {
        let r = |rng: &mut ChaCha8Rng| DVector::from_fn(6, |_, _| rng.gen_range(-2.0..2.0));
        let (v, w, s) = (r(&mut rng), r(&mut rng), r(&mut rng));
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let lhs = length_of(&(&v * a + &w * b), &s, &om).unwrap();
        let rhs = a * length_of(&v, &s, &om).unwrap() + b * length_of(&w, &s, &om).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
        assert_eq!(length_of(&z, &s, &om).unwrap(), 0.0);
    }
    assert!(matches!(length_of(&DVector::zeros(4), &z, &om), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn length_along_beta_ray() {
    let pa = shipped();
    let (dec, p) = potential_from_action(&pa).unwrap();
    let beta1 = dec.basis.column(dec.dimension() / 2).into_owned();
    for t in [0.5, 1.0, 3.0] {
        let l = length_of(&pa.mu_plus, &(&beta1 * t), &p.omega).unwrap();
        assert!((l - t).abs() < 1e-9);
    }
}

#[test]
fn identity_gives_zero_potential() {
    let pa = synthetic(DMatrix::identity(4, 4), DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]));
    let dec = BlockDecomposition::from_blocks(
        vec![BlockKind::UnitCircleSimple { theta: 0.0 }, BlockKind::UnitCircleSimple { theta: 0.0 }],
        DMatrix::identity(4, 4),
    )
    .unwrap();
    let p = build_potential(&pa, &dec).unwrap();
    assert!(p.x.amax() == 0.0);
    assert!(p.evaluate(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0])).abs() == 0.0);
}

#[test]
fn real_pair_potential_is_minus_log_xy() {
    let lam: f64 = 3.0;
    let pa = synthetic(DMatrix::from_row_slice(2, 2, &[lam, 0.0, 0.0, 1.0 / lam]), DVector::from_vec(vec![1.0, 0.0]));
    let dec = BlockDecomposition::from_blocks(vec![BlockKind::RealPair { lambda: lam }], DMatrix::identity(2, 2)).unwrap();
    let p = build_potential(&pa, &dec).unwrap();
    for &(x, y) in &[(1.0, 2.0), (-0.5, 3.0), (2.0, -1.5)] {
        let s = DVector::from_vec(vec![x, y]);
        assert!((p.evaluate(&s) + lam.ln() * x * y).abs() < 1e-12);
        assert!((p.evaluate_quadratic(&s) + lam.ln() * x * y).abs() < 1e-12);
    }
}

#[test]
fn unit_circle_potential_is_half_theta_sum_of_squares() {
    let th: f64 = 0.8;
    let b = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
    let pa = synthetic(b, DVector::from_vec(vec![1.0, 0.0]));
    let dec = BlockDecomposition::from_blocks(vec![BlockKind::UnitCircleSimple { theta: th }], DMatrix::identity(2, 2)).unwrap();
    let p = build_potential(&pa, &dec).unwrap();
    let s = DVector::from_vec(vec![0.3, -1.7]);
    let expect = th / 2.0 * (s[0] * s[0] + s[1] * s[1]);
    assert!((p.evaluate(&s) - expect).abs() < 1e-12);
    assert!((p.evaluate_quadratic(&s) - expect).abs() < 1e-12);
}

#[test]
fn wrong_decomposition_is_rejected() {
    let pa = synthetic(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]), DVector::from_vec(vec![1.0, 0.0]));
    let dec = BlockDecomposition::from_blocks(vec![BlockKind::RealPair { lambda: 3.0 }], DMatrix::identity(2, 2)).unwrap();
    assert!(matches!(build_potential(&pa, &dec), Err(Error::DecompositionMismatch { .. })));
}

#[test]
fn shipped_potential_terms_match_quadratic_form() {
    let pa = shipped();
    let (_, p) = potential_from_action(&pa).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let s = DVector::from_fn(6, |_, _| rng.gen_range(-5.0..5.0));
        assert!((p.evaluate(&s) - p.evaluate_quadratic(&s)).abs() < 1e-9);
    }
}

#[test]
fn time_one_flow_inverts_the_action() {
    let pa = shipped();
    let (_, p) = potential_from_action(&pa).unwrap();
    let binv = pa.b.clone().try_inverse().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut done = 0;
    while done < 20 {
        let s0 = random_cone_point(&mut rng, &p);
        match flow(&p, &s0, 1.0) {
            Ok(s1) => {
                assert!((&s1.sigma - &binv * &s0.sigma).amax() < 1e-8);
                done += 1;
            }
            Err(Error::LeftCone { .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn flow_conserves_potential_and_form() {
    let pa = shipped();
    let (_, p) = potential_from_action(&pa).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let s0 = random_cone_point(&mut rng, &p);
        let tr = flow_trajectory(&p, &s0, 2.0, 20);
        assert_eq!(tr.points.len(), 21);
        let scale = p.evaluate(&s0.sigma).abs().max(1.0);
        assert!(tr.conservation_residual() < 1e-9 * scale);
    }
    for i in 0..=20 {
        assert!(flow_symplectic_residual(&p, 0.1 * i as f64) < 1e-8);
    }
    let s0 = random_cone_point(&mut rng, &p);
    let tr = flow_trajectory(&p, &s0, 0.0, 10);
    assert_eq!(tr.points, vec![s0.sigma.clone()]);
}

#[test]
fn stretch_line_is_invariant_and_potential_vanishes() {
    let pa = shipped();
    let (dec, p) = potential_from_action(&pa).unwrap();
    let beta1 = dec.basis.column(dec.dimension() / 2).into_owned();
    for s in [0.5, 1.0, 2.0] {
        assert!(p.evaluate(&(&beta1 * s)).abs() < 1e-10);
    }
    let start = ShearPoint::new(beta1.clone(), &p.mu_plus, &p.omega).unwrap();
    let rate = (pa.k as f64) * pa.lambda.ln();
    for t in [0.25, 0.5, 1.0] {
        let s = flow(&p, &start, t).unwrap().sigma;
        let expect = &beta1 * (t * rate).exp();
        assert!((&s - &expect).amax() / expect.amax() < 1e-9);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let pa = shipped();
    let (_, p) = potential_from_action(&pa).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let s = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let g = p.gradient(&s);
        let fd = fd_gradient(|x| p.evaluate(x), &s, 1e-5);
        assert!((&g - &fd).amax() / g.amax().max(1.0) < 1e-6);
    }
}

#[test]
fn leaving_the_cone_is_reported() {
    let pa = shipped();
    let (_, p) = potential_from_action(&pa).unwrap();
    let bad = -&p.mu_plus.clone();
    // ω(μ₊, μ₊) = 0 so anything parallel to μ₊ sits on the boundary
    assert!(matches!(ShearPoint::new(bad, &p.mu_plus, &p.omega), Err(Error::LeftCone { .. })));
}

#[test]
fn earthquake_and_stretch() {
    let om = std_form(2);
    let s = DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5]);
    let mu = DVector::from_vec(vec![0.0, 1.0, 1.0, 0.0]);
    assert_eq!(earthquake(&s, &mu, 0.0).unwrap(), s);
    let twice = earthquake(&earthquake(&s, &mu, 0.3).unwrap(), &mu, 0.4).unwrap();
    assert!((twice - earthquake(&s, &mu, 0.7).unwrap()).amax() < 1e-15);
    let a = DVector::from_vec(vec![1.0, -1.0, 0.5, 2.0]);
    let h = 1e-3;
    let fd = (length_of(&a, &earthquake(&s, &mu, h).unwrap(), &om).unwrap()
        - length_of(&a, &earthquake(&s, &mu, -h).unwrap(), &om).unwrap())
        / (2.0 * h);
    assert!((fd - poisson_same_lamination(&a, &mu, &om).unwrap()).abs() < 1e-10);
    assert_eq!(stretch(&s, 0.0), s);
    assert!((stretch(&stretch(&s, 0.2), 0.5) - stretch(&s, 0.7)).amax() < 1e-14);
    let l = length_of(&a, &s, &om).unwrap();
    assert!((length_of(&a, &stretch(&s, 0.4), &om).unwrap() - 0.4f64.exp() * l).abs() < 1e-13);
}

#[test]
fn same_lamination_bracket() {
    let om = std_form(2);
    let a = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
    let b = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]);
    assert_eq!(poisson_same_lamination(&a, &a, &om).unwrap(), 0.0);
    assert_eq!(poisson_same_lamination(&a, &b, &om).unwrap(), 1.0);
    assert_eq!(poisson_same_lamination(&b, &a, &om).unwrap(), -1.0);
    let t = TrainTrack::from_json(include_str!("../data/genus2_track.json")).unwrap();
    let ws = weight_space(&t).unwrap();
    let f = thurston_form(&t, &ws.basis).unwrap();
    let x: Vec<_> = (0..6).map(|i| q(i as i64 - 2)).collect();
    let y: Vec<_> = (0..6).map(|i| q((i * i) as i64 % 5)).collect();
    let direct = thurston_pairing(&t, &ws.vector(&x).values, &ws.vector(&y).values);
    assert_eq!(poisson_same_lamination_exact(&x, &y, &f.exact).unwrap(), direct);
}

#[test]
fn dlog_length_is_one() {
    let om = std_form(3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let a = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let s = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        assert_eq!(dlog_length_along_stretch_same(&a, &s, &om).unwrap(), 1.0);
        assert_eq!(dlog_length_along_stretch_same(&a, &(&s * 3.5), &om).unwrap(), 1.0);
    }
}

fn random_symplectic(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let s = DMatrix::from_fn(2 * n, 2 * n, |_, _| rng.gen_range(-0.5..0.5));
    let s = &s + s.transpose();
    expm(&(std_form(n).try_inverse().unwrap() * s))
}

fn blocks(j: &DMatrix<f64>) -> [DMatrix<f64>; 4] {
    let n = j.nrows() / 2;
    [
        j.view((0, 0), (n, n)).into_owned(),
        j.view((0, n), (n, n)).into_owned(),
        j.view((n, 0), (n, n)).into_owned(),
        j.view((n, n), (n, n)).into_owned(),
    ]
}

#[test]
fn jacobian_inverse_by_transposed_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let j = random_symplectic(&mut rng, 3);
        let [a, b, c, d] = blocks(&j);
        let (jj, inv) = jacobian_assembly(&a, &b, &c, &d, 1e-9).unwrap();
        assert_eq!(jj, j);
        let direct = j.clone().try_inverse().unwrap();
        assert!((&inv - direct).amax() < 1e-10);
        assert!((&j * &inv - DMatrix::identity(6, 6)).amax() < 1e-9);
    }
    let i = DMatrix::identity(3, 3);
    let z = DMatrix::zeros(3, 3);
    let (j, inv) = jacobian_assembly(&i, &z, &z, &i, 1e-9).unwrap();
    assert_eq!(j, DMatrix::identity(6, 6));
    assert_eq!(inv, DMatrix::identity(6, 6));
}

fn random_inputs(rng: &mut ChaCha8Rng, n: usize) -> BracketInputs {
    let v = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>();
    let m = |rng: &mut ChaCha8Rng| (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    BracketInputs {
        log_lambda: v(rng),
        l_alpha: v(rng),
        l_beta: v(rng),
        l_a: v(rng),
        l_b: v(rng),
        cos_beta_b: m(rng),
        cos_beta_a: m(rng),
        cos_alpha_b: m(rng),
        cos_alpha_a: m(rng),
    }
}

#[test]
fn bracket_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut inp = random_inputs(&mut rng, 3);
    // brute force: expand every one of the 4n² products separately
    let mut expect = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let w = inp.log_lambda[i] * inp.log_lambda[j];
            expect += w * inp.l_alpha[i] * inp.l_a[j] * inp.cos_beta_b[i][j];
            expect += w * inp.l_alpha[i] * inp.l_b[j] * inp.cos_beta_a[i][j];
            expect += w * inp.l_beta[i] * inp.l_a[j] * inp.cos_alpha_b[i][j];
            expect += w * inp.l_beta[i] * inp.l_b[j] * inp.cos_alpha_a[i][j];
        }
    }
    assert!((pa_bracket_evaluate(&inp).unwrap() - expect).abs() < 1e-12);
    for m in [&mut inp.cos_beta_b, &mut inp.cos_beta_a, &mut inp.cos_alpha_b, &mut inp.cos_alpha_a] {
        for r in m.iter_mut() {
            r.iter_mut().for_each(|x| *x = 0.0);
        }
    }
    assert_eq!(pa_bracket_evaluate(&inp).unwrap(), 0.0);
    inp.l_a.pop();
    assert!(matches!(pa_bracket_evaluate(&inp), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn bracket_on_stretch_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for t in [-0.5, 0.0, 1.2] {
        let mut inp = random_inputs(&mut rng, 3);
        inp.l_alpha = vec![f64::exp(t), 0.0, 0.0];
        inp.l_beta = vec![0.0; 3];
        // hand reduction: only i = 1 with the α-length survives
        let mut expect = 0.0;
        for j in 0..3 {
            expect += inp.log_lambda[j] * (inp.l_a[j] * inp.cos_beta_b[0][j] + inp.l_b[j] * inp.cos_beta_a[0][j]);
        }
        expect *= t.exp() * inp.log_lambda[0];
        let full = pa_bracket_evaluate(&inp).unwrap();
        let short = pa_bracket_stretch_line(&inp, t).unwrap();
        assert!((full - expect).abs() < 1e-12);
        assert!((short - expect).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn poisson_is_antisymmetric(a in prop::collection::vec(-3.0f64..3.0, 6), b in prop::collection::vec(-3.0f64..3.0, 6)) {
        let om = std_form(3);
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        let ab = poisson_same_lamination(&a, &b, &om).unwrap();
        let ba = poisson_same_lamination(&b, &a, &om).unwrap();
        prop_assert!((ab + ba).abs() < 1e-12);
    }

    #[test]
    fn flipped_potential_runs_backwards(t in 0.0f64..1.0) {
        let pa = shipped();
        let (_, p) = potential_from_action(&pa).unwrap();
        let back = p.flip();
        let e = expm(&(&p.x * -t)) * expm(&(&back.x * -t));
        prop_assert!((e - DMatrix::identity(6, 6)).amax() < 1e-9);
    }
}
