//! Quadratic Hamiltonians in length coordinates, their flows in shear
//! coordinates, and the bracket and Jacobian formulas built from them.

use crate::error::{Error, Result};
use crate::linalg;
use crate::pa::PseudoAnosovData;
use crate::rational::{Q, QMat};
use crate::symplectic::{self, BlockDecomposition, BlockKind, EigenOptions, Term};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Point of the shear cone with its positivity witness ω(μ₊, σ).
#[derive(Clone, Debug, PartialEq)]
pub struct ShearPoint {
    pub sigma: DVector<f64>,
    pub witness: f64,
}

impl ShearPoint {
    pub fn new(sigma: DVector<f64>, mu_plus: &DVector<f64>, omega: &DMatrix<f64>) -> Result<Self> {
        check_dims(mu_plus.len(), sigma.len())?;
        let witness = linalg::form(omega, mu_plus, &sigma);
        if witness <= 0.0 {
            return Err(Error::LeftCone { t: 0.0, witness });
        }
        Ok(ShearPoint { sigma, witness })
    }
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}

/// ℓ_v(σ) = ω(v, σ).
pub fn length_of(v: &DVector<f64>, sigma: &DVector<f64>, omega: &DMatrix<f64>) -> Result<f64> {
    check_dims(omega.nrows(), v.len())?;
    check_dims(omega.nrows(), sigma.len())?;
    Ok(linalg::form(omega, v, sigma))
}

#[derive(Clone, Debug)]
pub struct PotentialSpec {
    /// Monomials over the length functionals of the `basis` columns.
    pub terms: Vec<Term>,
    /// Generator in ambient coordinates; the flow is `exp(-tX)`.
    pub x: DMatrix<f64>,
    pub basis: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub mu_plus: DVector<f64>,
    pub kinds: Vec<BlockKind>,
}

impl PotentialSpec {
    pub fn dimension(&self) -> usize {
        self.x.nrows()
    }

    /// All length coordinates `ℓ_{v_i}(σ)` for the basis columns.
    pub fn lengths(&self, sigma: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * &self.omega * sigma
    }

    pub fn evaluate(&self, sigma: &DVector<f64>) -> f64 {
        let l = self.lengths(sigma);
        self.terms.iter().map(|t| t.coeff * l[t.i] * l[t.j]).sum()
    }

    /// `-½ ω(Xσ, σ)`.
    pub fn evaluate_quadratic(&self, sigma: &DVector<f64>) -> f64 {
        -0.5 * linalg::form(&self.omega, &(&self.x * sigma), sigma)
    }

    /// Gradient `ΩXσ` of the potential.
    pub fn gradient(&self, sigma: &DVector<f64>) -> DVector<f64> {
        &self.omega * (&self.x * sigma)
    }

    pub fn witness(&self, sigma: &DVector<f64>) -> f64 {
        linalg::form(&self.omega, &self.mu_plus, sigma)
    }

    pub fn flip(&self) -> PotentialSpec {
        let mut p = self.clone();
        p.x = -&p.x;
        for t in &mut p.terms {
            t.coeff = -t.coeff;
        }
        p
    }
}

/// Potential for `pa.b` in the coordinates of a decomposition of it.
pub fn build_potential(pa: &PseudoAnosovData, dec: &BlockDecomposition) -> Result<PotentialSpec> {
    check_dims(pa.b.nrows(), dec.dimension())?;
    let tol = pa.tol.max(1e-8) * pa.b.amax().max(1.0);
    let residual = dec.canonical_residual(&pa.b)?;
    let sres = dec.symplectic_basis_residual(&pa.omega.form);
    if residual > tol || sres > tol {
        return Err(Error::DecompositionMismatch { residual: residual.max(sres) });
    }
    let mut terms = Vec::new();
    for blk in &dec.blocks {
        let m = blk.kind.half_dim();
        let global = |i: usize| if i < m { blk.alpha[i] } else { blk.beta[i - m] };
        for t in symplectic::block_terms(&blk.kind)? {
            terms.push(Term { coeff: t.coeff, i: global(t.i), j: global(t.j) });
        }
    }
    Ok(PotentialSpec {
        terms,
        x: dec.ambient_x()?,
        basis: dec.basis.clone(),
        omega: pa.omega.form.clone(),
        mu_plus: pa.mu_plus.clone(),
        kinds: dec.blocks.iter().map(|b| b.kind.clone()).collect(),
    })
}

/// Symplectic eigenbasis of `pa.b` with `α_1 = μ₊`.
pub fn aligned_eigenbasis(pa: &PseudoAnosovData, opts: &EigenOptions) -> Result<BlockDecomposition> {
    let mut dec = symplectic::symplectic_eigenbasis(&pa.b, &pa.omega.form, opts)?;
    let target = pa.stretch_power();
    let idx = dec
        .blocks
        .iter()
        .position(|b| matches!(b.kind, BlockKind::RealPair { lambda } if (lambda - target).abs() <= 1e-6 * target))
        .ok_or(Error::DecompositionMismatch { residual: f64::INFINITY })?;
    let col = dec.blocks[idx].alpha[0];
    let a = dec.basis.column(col).into_owned();
    let c = pa.mu_plus.dot(&a) / a.dot(&a);
    dec.rescale_pair(col, c);
    let resid = (dec.basis.column(col) - &pa.mu_plus).amax() / pa.mu_plus.amax();
    if resid > 1e-6 {
        return Err(Error::DecompositionMismatch { residual: resid });
    }
    if idx == 0 && col == 0 {
        return Ok(dec);
    }
    // move the stretch pair to the front
    let mut order: Vec<usize> = (0..dec.blocks.len()).collect();
    order.retain(|&i| i != idx);
    order.insert(0, idx);
    let n = dec.dimension() / 2;
    let alphas: Vec<usize> = order.iter().flat_map(|&i| dec.blocks[i].alpha.clone()).collect();
    let betas: Vec<usize> = order.iter().flat_map(|&i| dec.blocks[i].beta.clone()).collect();
    let mut basis = DMatrix::zeros(2 * n, 2 * n);
    for (k, &c) in alphas.iter().chain(&betas).enumerate() {
        basis.set_column(k, &dec.basis.column(c));
    }
    let kinds = order.iter().map(|&i| dec.blocks[i].kind.clone()).collect();
    BlockDecomposition::from_blocks(kinds, basis)
}

/// Potential of a diagonalizable action, with α₁ aligned to μ₊.
pub fn potential_from_action(pa: &PseudoAnosovData) -> Result<(BlockDecomposition, PotentialSpec)> {
    let dec = aligned_eigenbasis(pa, &EigenOptions::default())?;
    let p = build_potential(pa, &dec)?;
    Ok((dec, p))
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<DVector<f64>>,
    pub potential: Vec<f64>,
    pub witness: Vec<f64>,
    /// First sample with nonpositive witness, if any.
    pub left_cone: Option<(f64, f64)>,
}

impl Trajectory {
    pub fn conservation_residual(&self) -> f64 {
        let f0 = self.potential[0];
        self.potential.iter().map(|f| (f - f0).abs()).fold(0.0, f64::max)
    }
}

/// Sample `exp(-sX)σ0` at `steps + 1` equally spaced times in `[0, t]`.
pub fn flow_trajectory(p: &PotentialSpec, sigma0: &ShearPoint, t: f64, steps: usize) -> Trajectory {
    let n = if t == 0.0 { 0 } else { steps.max(1) };
    let mut tr = Trajectory { times: vec![], points: vec![], potential: vec![], witness: vec![], left_cone: None };
    for i in 0..=n {
        let s = if n == 0 { 0.0 } else { t * i as f64 / n as f64 };
        let pt = if s == 0.0 { sigma0.sigma.clone() } else { linalg::expm(&(&p.x * -s)) * &sigma0.sigma };
        let w = p.witness(&pt);
        if w <= 0.0 && tr.left_cone.is_none() {
            tr.left_cone = Some((s, w));
        }
        tr.potential.push(p.evaluate(&pt));
        tr.witness.push(w);
        tr.times.push(s);
        tr.points.push(pt);
    }
    tr
}

pub fn flow(p: &PotentialSpec, sigma0: &ShearPoint, t: f64) -> Result<ShearPoint> {
    let tr = flow_trajectory(p, sigma0, t, 16);
    if let Some((t, witness)) = tr.left_cone {
        return Err(Error::LeftCone { t, witness });
    }
    let sigma = tr.points.last().cloned().unwrap_or_else(|| sigma0.sigma.clone());
    Ok(ShearPoint { witness: p.witness(&sigma), sigma })
}

pub fn flow_symplectic_residual(p: &PotentialSpec, t: f64) -> f64 {
    let e = linalg::expm(&(&p.x * -t));
    linalg::symplectic_residual(&e, &p.omega)
}

pub fn earthquake(sigma: &DVector<f64>, mu: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    check_dims(sigma.len(), mu.len())?;
    Ok(sigma + mu * t)
}

pub fn stretch(sigma: &DVector<f64>, t: f64) -> DVector<f64> {
    sigma * t.exp()
}

/// `{ℓ_α, ℓ_β} = ω(α, β)` for cocycles on one lamination.
pub fn poisson_same_lamination(alpha: &DVector<f64>, beta: &DVector<f64>, omega: &DMatrix<f64>) -> Result<f64> {
    check_dims(omega.nrows(), alpha.len())?;
    check_dims(omega.nrows(), beta.len())?;
    Ok(linalg::form(omega, alpha, beta))
}

pub fn poisson_same_lamination_exact(alpha: &[Q], beta: &[Q], omega: &QMat) -> Result<Q> {
    check_dims(omega.nrows(), alpha.len())?;
    check_dims(omega.nrows(), beta.len())?;
    let mut s = Q::default();
    for i in 0..alpha.len() {
        for j in 0..beta.len() {
            s += &alpha[i] * &omega[(i, j)] * &beta[j];
        }
    }
    Ok(s)
}

/// `d log ℓ_α` along the stretch field `σ` of the lamination carrying α.
pub fn dlog_length_along_stretch_same(alpha: &DVector<f64>, sigma: &DVector<f64>, omega: &DMatrix<f64>) -> Result<f64> {
    let ell = length_of(alpha, sigma, omega)?;
    if ell == 0.0 {
        return Err(Error::ZeroLength);
    }
    // the stretch field at σ is σ itself
    let field = sigma.clone();
    Ok(linalg::form(omega, alpha, &field) / ell)
}

/// Assemble `[[A, B], [C, D]]` and its inverse `[[Dᵀ, -Bᵀ], [-Cᵀ, Aᵀ]]`.
pub fn jacobian_assembly(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    tol: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    for m in [a, b, c, d] {
        check_dims(n, m.nrows())?;
        check_dims(n, m.ncols())?;
    }
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    let mut inv = DMatrix::zeros(2 * n, 2 * n);
    j.view_mut((0, 0), (n, n)).copy_from(a);
    j.view_mut((0, n), (n, n)).copy_from(b);
    j.view_mut((n, 0), (n, n)).copy_from(c);
    j.view_mut((n, n), (n, n)).copy_from(d);
    inv.view_mut((0, 0), (n, n)).copy_from(&d.transpose());
    inv.view_mut((0, n), (n, n)).copy_from(&(-b.transpose()));
    inv.view_mut((n, 0), (n, n)).copy_from(&(-c.transpose()));
    inv.view_mut((n, n), (n, n)).copy_from(&a.transpose());
    let residual = linalg::symplectic_residual(&j, &linalg::std_form(n));
    if residual > tol * j.amax().max(1.0).powi(2) {
        return Err(Error::NotSymplectic { residual });
    }
    Ok((j, inv))
}

/// Inputs of the double-sum bracket of two pseudo-Anosov potentials. Cosine
/// matrices are indexed `[i][j]` with `i` over (α, β) and `j` over (A, B).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BracketInputs {
    pub log_lambda: Vec<f64>,
    pub l_alpha: Vec<f64>,
    pub l_beta: Vec<f64>,
    pub l_a: Vec<f64>,
    pub l_b: Vec<f64>,
    pub cos_beta_b: Vec<Vec<f64>>,
    pub cos_beta_a: Vec<Vec<f64>>,
    pub cos_alpha_b: Vec<Vec<f64>>,
    pub cos_alpha_a: Vec<Vec<f64>>,
}

impl BracketInputs {
    fn check(&self) -> Result<usize> {
        let n = self.log_lambda.len();
        for v in [&self.l_alpha, &self.l_beta, &self.l_a, &self.l_b] {
            check_dims(n, v.len())?;
        }
        for m in [&self.cos_beta_b, &self.cos_beta_a, &self.cos_alpha_b, &self.cos_alpha_a] {
            check_dims(n, m.len())?;
            for r in m {
                check_dims(n, r.len())?;
            }
        }
        Ok(n)
    }
}

pub fn pa_bracket_evaluate(inp: &BracketInputs) -> Result<f64> {
    let n = inp.check()?;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let inner = inp.l_alpha[i] * inp.l_a[j] * inp.cos_beta_b[i][j]
                + inp.l_alpha[i] * inp.l_b[j] * inp.cos_beta_a[i][j]
                + inp.l_beta[i] * inp.l_a[j] * inp.cos_alpha_b[i][j]
                + inp.l_beta[i] * inp.l_b[j] * inp.cos_alpha_a[i][j];
            s += inp.log_lambda[i] * inp.log_lambda[j] * inner;
        }
    }
    Ok(s)
}

/// Single-sum form on the stretch line `e^t β₁`, where `ℓ_{α_1} = e^t` and
/// every other α, β length vanishes.
pub fn pa_bracket_stretch_line(inp: &BracketInputs, t: f64) -> Result<f64> {
    let n = inp.check()?;
    let s: f64 = (0..n)
        .map(|j| inp.log_lambda[j] * (inp.l_a[j] * inp.cos_beta_b[0][j] + inp.l_b[j] * inp.cos_beta_a[0][j]))
        .sum();
    Ok(t.exp() * inp.log_lambda[0] * s)
}

/// Central-difference gradient with one Richardson step.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(n, |i, _| {
        let d = |h: f64| {
            let mut p = x.clone();
            let mut m = x.clone();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        };
        (4.0 * d(h / 2.0) - d(h)) / 3.0
    })
}


pub const POTENTIAL_SCHEMA: &str = "potential/1";
pub const SHEAR_SCHEMA: &str = "shear/1";

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = r.first().map_or(0, |x| x.len());
    for row in r {
        check_dims(n, row.len())?;
    }
    Ok(DMatrix::from_fn(r.len(), n, |i, j| r[i][j]))
}

/// Serialized potential together with the action it was built from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PotentialFile {
    pub schema: String,
    pub stretch: f64,
    pub power: usize,
    pub kinds: Vec<BlockKind>,
    pub terms: Vec<Term>,
    pub x: Vec<Vec<f64>>,
    pub basis: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub mu_plus: Vec<f64>,
    /// The k-th power of the action in weight-space coordinates.
    pub action: Vec<Vec<f64>>,
}

impl PotentialFile {
    pub fn new(pa: &PseudoAnosovData, p: &PotentialSpec) -> Self {
        PotentialFile {
            schema: POTENTIAL_SCHEMA.into(),
            stretch: pa.lambda,
            power: pa.k,
            kinds: p.kinds.clone(),
            terms: p.terms.clone(),
            x: rows(&p.x),
            basis: rows(&p.basis),
            omega: rows(&p.omega),
            mu_plus: p.mu_plus.iter().copied().collect(),
            action: rows(&pa.b),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: PotentialFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if f.schema != POTENTIAL_SCHEMA {
            return Err(Error::Parse(format!("expected schema {POTENTIAL_SCHEMA}, found {}", f.schema)));
        }
        Ok(f)
    }

    pub fn spec(&self) -> Result<PotentialSpec> {
        let x = from_rows(&self.x)?;
        let n = x.nrows();
        check_dims(n, x.ncols())?;
        let basis = from_rows(&self.basis)?;
        let omega = from_rows(&self.omega)?;
        for m in [&basis, &omega] {
            check_dims(n, m.nrows())?;
            check_dims(n, m.ncols())?;
        }
        check_dims(n, self.mu_plus.len())?;
        if let Some(t) = self.terms.iter().find(|t| t.i >= n || t.j >= n) {
            return Err(Error::ShapeMismatch { expected: n, found: t.i.max(t.j) });
        }
        Ok(PotentialSpec {
            terms: self.terms.clone(),
            x,
            basis,
            omega,
            mu_plus: DVector::from_vec(self.mu_plus.clone()),
            kinds: self.kinds.clone(),
        })
    }

    pub fn action(&self) -> Result<DMatrix<f64>> {
        from_rows(&self.action)
    }
}

/// `{"schema": "shear/1", "sigma": [...]}`.
pub fn parse_shear(s: &str) -> Result<DVector<f64>> {
    #[derive(Deserialize)]
    struct ShearFile {
        schema: String,
        sigma: Vec<f64>,
    }
    let f: ShearFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
    if f.schema != SHEAR_SCHEMA {
        return Err(Error::Parse(format!("expected schema {SHEAR_SCHEMA}, found {}", f.schema)));
    }
    Ok(DVector::from_vec(f.sigma))
}
