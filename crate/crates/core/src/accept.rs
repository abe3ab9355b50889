//! Acceptance batteries, one per numbered criterion, shared by the CLI and the test suite.

use crate::hamiltonian::{
    dlog_length_along_stretch_same, flow, flow_symplectic_residual, flow_trajectory, jacobian_assembly,
    potential_from_action, poisson_same_lamination_exact, PotentialSpec, ShearPoint,
};
use crate::hyperbolic::{
    build_genus2_fn, build_punctured_torus, cosine_sum, dlength_dtwist, dtau_dshear_check, dtau_dshear_exact,
    multicurve_bracket, FuchsianRep,
};
use crate::linalg::{expm, max_abs, reciprocal_residual, std_form};
use crate::pa::{build_linear_action, perron_frobenius, twist_word_matrix, PseudoAnosovData, TwistSystem};
use crate::rational::{q_frac, Q};
use crate::symplectic::{block_generator, block_terms, BlockKind, Term};
use crate::tracks::{
    conjugation_residual, duality_star, thurston_form, thurston_pairing, weight_space, IncidenceMatrix, TrainTrack,
};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::Instant;

pub const DEFAULT_SEED: u64 = 20240917;
pub const SUITES: [&str; 6] = ["tracks", "pa", "symplectic", "hamiltonian", "hyperbolic", "all"];

pub const GENUS2_TRACK: &str = include_str!("../data/genus2_track.json");
pub const GENUS2_INCIDENCE: &str = include_str!("../data/genus2_incidence.json");
pub const TORUS_TWISTS: &str = include_str!("../data/torus_twists.json");

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
}

impl Check {
    /// Passes when `residual < tolerance`; NaN fails.
    pub fn below(name: impl Into<String>, residual: f64, tolerance: f64) -> Check {
        Check { name: name.into(), passed: residual < tolerance, residual, tolerance }
    }

    fn failed(name: impl Into<String>, e: &Error) -> Check {
        Check { name: format!("{}: {e}", name.into()), passed: false, residual: f64::NAN, tolerance: 0.0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub id: usize,
    pub title: &'static str,
    pub suite: &'static str,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    /// One line: status, id, title and the worst check.
    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let worst = self.checks.iter().find(|c| !c.passed).or(self.checks.first());
        let detail = worst.map(|c| format!("{} = {:.3e} (tol {:.0e})", c.name, c.residual, c.tolerance)).unwrap_or_default();
        format!("{status} [{:>2}] {:<34} {detail} [{:.2}s]", self.id, self.title, self.seconds)
    }
}

struct Spec {
    id: usize,
    title: &'static str,
    suite: &'static str,
    run: fn(&mut ChaCha8Rng) -> Result<Vec<Check>>,
    runtime_limit: Option<f64>,
}

const CRITERIA: [Spec; 11] = [
    Spec { id: 1, title: "time-one flow inverts the action", suite: "hamiltonian", run: time_one_flow, runtime_limit: Some(5.0) },
    Spec { id: 2, title: "block potential expansions", suite: "symplectic", run: block_expansions, runtime_limit: Some(10.0) },
    Spec { id: 3, title: "conservation and symplecticity", suite: "hamiltonian", run: conservation, runtime_limit: None },
    Spec { id: 4, title: "stretch-line vanishing", suite: "hamiltonian", run: stretch_line, runtime_limit: None },
    Spec { id: 5, title: "spectrum pairing", suite: "pa", run: spectrum_pairing, runtime_limit: None },
    Spec { id: 6, title: "cosine formula at atoms", suite: "hyperbolic", run: cosine_formula, runtime_limit: Some(60.0) },
    Spec { id: 7, title: "trace-derivative formula", suite: "hyperbolic", run: trace_derivative, runtime_limit: None },
    Spec { id: 8, title: "bracket antisymmetry at atoms", suite: "hyperbolic", run: bracket_atoms, runtime_limit: None },
    Spec { id: 9, title: "block-inverse identity", suite: "hamiltonian", run: block_inverse, runtime_limit: None },
    Spec { id: 10, title: "same-lamination log-length rate", suite: "hamiltonian", run: dlog_rate, runtime_limit: None },
    Spec { id: 11, title: "duality identities", suite: "tracks", run: duality, runtime_limit: None },
];

/// Criterion ids run by a suite, in order.
pub fn suite_criteria(suite: &str) -> Result<Vec<usize>> {
    if !SUITES.contains(&suite) {
        return Err(Error::BadParams(format!("unknown suite {suite:?}; expected one of {}", SUITES.join(", "))));
    }
    Ok(CRITERIA.iter().filter(|c| suite == "all" || c.suite == suite).map(|c| c.id).collect())
}

pub fn run_criterion(id: usize, seed: u64) -> Result<CriterionReport> {
    let spec = CRITERIA.iter().find(|c| c.id == id).ok_or_else(|| Error::BadParams(format!("no criterion {id}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(id as u64));
    let start = Instant::now();
    let mut checks = match (spec.run)(&mut rng) {
        Ok(c) => c,
        Err(e) => vec![Check::failed("battery", &e)],
    };
    let seconds = start.elapsed().as_secs_f64();
    if let Some(limit) = spec.runtime_limit {
        checks.push(Check::below("runtime seconds", seconds, limit));
    }
    Ok(CriterionReport { id, title: spec.title, suite: spec.suite, checks, seconds })
}

pub fn run_suite(suite: &str, seed: u64) -> Result<Vec<CriterionReport>> {
    suite_criteria(suite)?.into_iter().map(|id| run_criterion(id, seed)).collect()
}

pub fn shipped_track() -> Result<TrainTrack> {
    TrainTrack::from_json(GENUS2_TRACK)
}

pub fn shipped_action() -> Result<PseudoAnosovData> {
    let t = shipped_track()?;
    let m = IncidenceMatrix::from_json(GENUS2_INCIDENCE)?;
    build_linear_action(&m, &t, 1e-9)
}

fn random_cone_point(rng: &mut ChaCha8Rng, p: &PotentialSpec) -> Result<ShearPoint> {
    loop {
        let mut s = DVector::from_fn(p.dimension(), |_, _| rng.gen_range(-1.0..1.0));
        if p.witness(&s) < 0.0 {
            s = -s;
        }
        if p.witness(&s) > 1e-3 {
            return ShearPoint::new(s, &p.mu_plus, &p.omega);
        }
    }
}

fn time_one_flow(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let pa = shipped_action()?;
    let (_, p) = potential_from_action(&pa)?;
    let binv = pa.b.clone().try_inverse().ok_or(Error::NotSymplectic { residual: f64::INFINITY })?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let s0 = random_cone_point(rng, &p)?;
        let s1 = flow(&p, &s0, 1.0)?;
        worst = worst.max((&s1.sigma - &binv * &s0.sigma).amax());
    }
    Ok(vec![Check::below("max |flow(σ,1) - B⁻¹σ|", worst, 1e-8)])
}

/// The closed-form polynomial in block length coordinates `ℓ_α = y`, `ℓ_β = -x`.
fn eval_terms(terms: &[Term], sigma: &DVector<f64>) -> f64 {
    let m = sigma.len() / 2;
    let ell = |i: usize| if i < m { sigma[m + i] } else { -sigma[i - m] };
    terms.iter().map(|t| t.coeff * ell(t.i) * ell(t.j)).sum()
}

pub fn block_kinds() -> Vec<BlockKind> {
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

fn block_expansions(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut worst: f64 = 0.0;
    let kinds = block_kinds();
    for kind in &kinds {
        let (x, _) = block_generator(kind)?;
        let terms = block_terms(kind)?;
        let om = std_form(x.nrows() / 2);
        for _ in 0..100 {
            let s = DVector::from_fn(x.nrows(), |_, _| rng.gen_range(-3.0..3.0));
            let quad = -0.5 * (&x * &s).dot(&(&om * &s));
            worst = worst.max((eval_terms(&terms, &s) - quad).abs());
        }
    }
    Ok(vec![Check::below(format!("max |polynomial + ½ω(Xσ,σ)| over {} blocks", kinds.len()), worst, 1e-9)])
}

fn conservation(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let pa = shipped_action()?;
    let (_, p) = potential_from_action(&pa)?;
    let mut cons: f64 = 0.0;
    for _ in 0..5 {
        let s0 = random_cone_point(rng, &p)?;
        let tr = flow_trajectory(&p, &s0, 2.0, 20);
        if tr.points.len() != 21 {
            return Err(Error::BadParams(format!("expected 21 samples, got {}", tr.points.len())));
        }
        cons = cons.max(tr.conservation_residual());
    }
    let symp = (0..=20).map(|i| flow_symplectic_residual(&p, 0.1 * i as f64)).fold(0.0, f64::max);
    Ok(vec![Check::below("max |F(σ_t) - F(σ_0)|", cons, 1e-9), Check::below("max ‖ΦᵀΩΦ - Ω‖", symp, 1e-8)])
}

fn stretch_line(_: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let pa = shipped_action()?;
    let (dec, p) = potential_from_action(&pa)?;
    let beta1 = dec.basis.column(dec.dimension() / 2).into_owned();
    let vanish = [0.5, 1.0, 2.0].iter().map(|s| p.evaluate(&(&beta1 * *s)).abs()).fold(0.0, f64::max);
    let start = ShearPoint::new(beta1.clone(), &p.mu_plus, &p.omega)?;
    let dir = beta1.normalize();
    let mut off: f64 = 0.0;
    for t in [0.25, 0.5, 1.0, 2.0] {
        let s = flow(&p, &start, t)?.sigma;
        let along = &dir * s.dot(&dir);
        off = off.max((&s - along).norm() / s.norm());
    }
    Ok(vec![Check::below("max |F(s·β₁)|", vanish, 1e-10), Check::below("collinearity residual", off, 1e-9)])
}

fn spectrum_pairing(_: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let pa = shipped_action()?;
    let sys = TwistSystem::from_json(TORUS_TWISTS)?;
    let mut torus: f64 = 0.0;
    for word in [vec![(0, 1), (1, -1)], vec![(0, 2), (1, -1)], vec![(0, 1), (1, -3), (0, 1)]] {
        let m = twist_word_matrix(&sys, &word)?.map(|v| v as f64);
        let spec = crate::linalg::eigenvalues(&m);
        torus = torus.max(reciprocal_residual(&spec));
    }
    let cat = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
    let (lam, _) = perron_frobenius(&cat)?;
    Ok(vec![
        Check::below("shipped spectrum vs reciprocals", pa.reciprocal_residual(), 1e-8),
        Check::below("torus twist words vs reciprocals", torus, 1e-8),
        Check::below("|Λ([[2,1],[1,1]]) - (3+√5)/2|", (lam - (3.0 + 5f64.sqrt()) / 2.0).abs(), 1e-10),
    ])
}

/// The (rep, γ, δ, weight) triples of the cosine-formula battery.
pub fn cosine_battery() -> Result<Vec<(FuchsianRep, &'static str, &'static str, f64)>> {
    let t33 = build_punctured_torus(3.0, 3.0)?;
    let t34 = build_punctured_torus(3.0, 4.0)?;
    let g1 = build_genus2_fn([1.0, 1.3, 0.9], [0.2, -0.3, 0.4])?;
    let g2 = build_genus2_fn([0.8, 1.1, 1.4], [0.5, 0.1, -0.2])?;
    Ok(vec![
        (t33.clone(), "B", "A", 1.0),
        (t33.clone(), "BB", "A", 0.5),
        (t33.clone(), "AAAB", "AB", 1.0),
        (t33, "AABAB", "B", 2.0),
        (t34.clone(), "B", "A", 1.0),
        (t34.clone(), "ABB", "AB", 1.5),
        (t34, "AAB", "Ab", 1.0),
        (g1.clone(), "B", "A", 1.0),
        (g1.clone(), "BD", "A", 1.0),
        (g1.clone(), "BDBd", "ABab", 1.0),
        (g1, "BCD", "C", 0.7),
        (g2.clone(), "AD", "ABab", 1.0),
        (g2.clone(), "AbCd", "B", 1.0),
        (g2, "BBD", "A", 1.0),
    ])
}

fn cosine_formula(_: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let battery = cosine_battery()?;
    let mut worst: f64 = 0.0;
    for (rep, g, d, w) in &battery {
        let depth = rep.surface.default_depth();
        let cs = cosine_sum(rep, g, d, *w, depth)?;
        let (fd, _) = dlength_dtwist(rep, g, d, *w, depth)?;
        worst = worst.max((fd - cs).abs() / cs.abs().max(1.0));
    }
    Ok(vec![Check::below(format!("max relative |dℓ/dt - Σ w cos θ| over {} triples", battery.len()), worst, 1e-5)])
}

fn trace_derivative(_: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let (mut stated, mut exact): (f64, f64) = (0.0, 0.0);
    for a in [-2.0, -1.0, -0.3] {
        for b in [0.5, 1.0, 3.0] {
            for l in [0.5, 2.0, 4.0] {
                let alpha = 0.8;
                let (an, num) = dtau_dshear_check(a, b, l, alpha)?;
                stated = stated.max((an - num).abs());
                exact = exact.max((dtau_dshear_exact(a, b, l, alpha) - num).abs());
            }
        }
    }
    Ok(vec![
        Check::below("max |stated - numeric| on 3×3×3 grid", stated, 1e-7),
        Check::below("max |2× stated - numeric| on 3×3×3 grid", exact, 1e-7),
    ])
}

fn bracket_atoms(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let g = build_genus2_fn([1.0, 1.3, 0.9], [0.2, -0.3, 0.4])?;
    let t = build_punctured_torus(3.0, 3.0)?;
    let mc = |v: &[(&str, f64)]| v.iter().map(|(s, w)| (s.to_string(), *w)).collect::<Vec<_>>();
    let pairs = [
        (&g, mc(&[("A", 1.0), ("C", 0.5)]), mc(&[("B", 0.3), ("ABab", 2.0)])),
        (&g, mc(&[("BD", 1.0)]), mc(&[("A", 1.0), ("C", 1.5)])),
        (&t, mc(&[("B", 1.0), ("AB", 0.4)]), mc(&[("A", 2.0)])),
        (&t, mc(&[("AAB", 1.0)]), mc(&[("Ab", 0.7), ("B", 1.0)])),
    ];
    let mut anti: f64 = 0.0;
    for (rep, x, y) in &pairs {
        let d = rep.surface.default_depth();
        anti = anti.max((multicurve_bracket(rep, x, y, d)? + multicurve_bracket(rep, y, x, d)?).abs());
    }
    let track = shipped_track()?;
    let ws = weight_space(&track)?;
    let form = thurston_form(&track, &ws.basis)?;
    let mut mismatches = 0usize;
    for _ in 0..20 {
        let mut r = || -> Vec<Q> { (0..ws.dimension()).map(|_| q_frac(rng.gen_range(-9..10), rng.gen_range(1..6))).collect() };
        let (x, y) = (r(), r());
        let bracket = poisson_same_lamination_exact(&x, &y, &form.exact)?;
        if bracket != thurston_pairing(&track, &ws.vector(&x).values, &ws.vector(&y).values) {
            mismatches += 1;
        }
    }
    Ok(vec![
        Check::below("max |{γ,δ} + {δ,γ}|", anti, 1e-9),
        Check::below("same-lamination bracket ≠ ω_Th (exact, count)", mismatches as f64, 0.5),
    ])
}

fn block_inverse(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let n = 3;
    let om_inv = std_form(n).try_inverse().ok_or(Error::DegenerateForm)?;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let s = DMatrix::from_fn(2 * n, 2 * n, |_, _| rng.gen_range(-0.5..0.5));
        let j = expm(&(&om_inv * (&s + s.transpose())));
        let block = |r: usize, c: usize| j.view((r * n, c * n), (n, n)).into_owned();
        let (_, inv) = jacobian_assembly(&block(0, 0), &block(0, 1), &block(1, 0), &block(1, 1), 1e-9)?;
        let direct = j.clone().try_inverse().ok_or(Error::DegenerateForm)?;
        worst = worst.max(max_abs(&(inv - direct)));
    }
    Ok(vec![Check::below("max |block inverse - numerical inverse|", worst, 1e-10)])
}

fn dlog_rate(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let om = std_form(3);
    let mut off = 0usize;
    for _ in 0..20 {
        let a = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let s = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        if dlog_length_along_stretch_same(&a, &s, &om)? != 1.0 {
            off += 1;
        }
    }
    Ok(vec![Check::below("pairs with rate ≠ 1.0 exactly", off as f64, 0.5)])
}

fn duality(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let pa = shipped_action()?;
    let n = pa.omega.dimension();
    let mut pair: f64 = 0.0;
    for _ in 0..50 {
        let w = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let star = duality_star(&pa.omega, &v)?;
        pair = pair.max((pa.omega.omega(&w, &star) - w.dot(&v)).abs());
    }
    let b1 = pa.b_exact.to_f64();
    let conj = conjugation_residual(&pa.omega, &b1)?.max(conjugation_residual(&pa.omega, &pa.b)?);
    Ok(vec![Check::below("max |ω(w,∗v) - ⟨w,v⟩|", pair, 1e-12), Check::below("max |∗B′ - B⁻¹∗|", conj, 1e-9)])
}
