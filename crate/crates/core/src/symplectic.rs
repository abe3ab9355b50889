//! Real symplectic spectral analysis: symplectic eigenbases in the diagonalizable
//! case, the principal logarithm, and per-block canonical generators.
//!
//! Local block coordinates are (α_1..α_m, β_1..β_m) with the standard form
//! `[[0, I], [-I, 0]]`. Length coordinates are ℓ_v(σ) = ω(v, σ), so in these
//! coordinates ℓ_{α_j} = y_j and ℓ_{β_j} = -x_j.

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const DEFAULT_CONDITION_CAP: f64 = 1e8;
const IMAG_DISCARD: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum BlockKind {
    RealPair { lambda: f64 },
    /// `theta` lies in `[0, π)`; a block of negative signature is recorded with `theta` in `(-π, 0)`.
    UnitCircleSimple { theta: f64 },
    ComplexQuad { modulus: f64, theta: f64 },
    RealJordan { lambda: f64, size: usize },
    ComplexJordan { modulus: f64, theta: f64, size: usize },
    UnipotentLagrangian { size: usize },
    UnipotentNonLagrangian { size: usize },
    UnitCircleLagrangian { theta: f64, size: usize },
    UnitCircleOddNoSplit { theta: f64, size: usize },
    UnitCircleEvenNoSplit { theta: f64, size: usize },
}

impl BlockKind {
    pub fn name(&self) -> &'static str {
        match self {
            BlockKind::RealPair { .. } => "RealPair",
            BlockKind::UnitCircleSimple { .. } => "UnitCircleSimple",
            BlockKind::ComplexQuad { .. } => "ComplexQuad",
            BlockKind::RealJordan { .. } => "RealJordan",
            BlockKind::ComplexJordan { .. } => "ComplexJordan",
            BlockKind::UnipotentLagrangian { .. } => "UnipotentLagrangian",
            BlockKind::UnipotentNonLagrangian { .. } => "UnipotentNonLagrangian",
            BlockKind::UnitCircleLagrangian { .. } => "UnitCircleLagrangian",
            BlockKind::UnitCircleOddNoSplit { .. } => "UnitCircleOddNoSplit",
            BlockKind::UnitCircleEvenNoSplit { .. } => "UnitCircleEvenNoSplit",
        }
    }

    /// Number of α (equally β) vectors in the block.
    pub fn half_dim(&self) -> usize {
        match *self {
            BlockKind::RealPair { .. } | BlockKind::UnitCircleSimple { .. } => 1,
            BlockKind::ComplexQuad { .. } => 2,
            BlockKind::RealJordan { size, .. }
            | BlockKind::UnipotentLagrangian { size }
            | BlockKind::UnipotentNonLagrangian { size }
            | BlockKind::UnitCircleOddNoSplit { size, .. }
            | BlockKind::UnitCircleEvenNoSplit { size, .. } => size,
            BlockKind::ComplexJordan { size, .. } | BlockKind::UnitCircleLagrangian { size, .. } => 2 * size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadParams(format!("{}: {m}", self.name())));
        let open_angle = |t: f64| t > 0.0 && t < PI;
        let circle_angle = |t: f64| (0.0..PI).contains(&t);
        match *self {
            BlockKind::RealPair { lambda } | BlockKind::RealJordan { lambda, .. } if !(lambda > 1.0 && lambda.is_finite()) => {
                bad("need real eigenvalue > 1")
            }
            BlockKind::UnitCircleSimple { theta } if !(theta > -PI && theta < PI) => bad("theta outside (-π, π)"),
            BlockKind::ComplexQuad { modulus, theta } | BlockKind::ComplexJordan { modulus, theta, .. }
                if !(modulus > 1.0 && modulus.is_finite() && open_angle(theta)) =>
            {
                bad("need modulus > 1 and theta in (0, π)")
            }
            BlockKind::UnitCircleLagrangian { theta, .. }
            | BlockKind::UnitCircleOddNoSplit { theta, .. }
            | BlockKind::UnitCircleEvenNoSplit { theta, .. }
                if !circle_angle(theta) =>
            {
                bad("theta outside [0, π)")
            }
            BlockKind::RealJordan { size: 0, .. }
            | BlockKind::ComplexJordan { size: 0, .. }
            | BlockKind::UnipotentLagrangian { size: 0 }
            | BlockKind::UnitCircleLagrangian { size: 0, .. } => bad("size must be positive"),
            BlockKind::UnipotentNonLagrangian { size } if size == 0 || size % 2 == 1 => bad("size must be even"),
            BlockKind::UnitCircleOddNoSplit { size, .. } if size % 2 == 0 => bad("size must be odd"),
            BlockKind::UnitCircleEvenNoSplit { size, .. } if size == 0 || size % 2 == 1 => bad("size must be even"),
            _ => Ok(()),
        }
    }
}

/// Quadratic monomial `coeff · ℓ_i · ℓ_j` in local length coordinates
/// (indices below `m` are α's, the rest β's).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub i: usize,
    pub j: usize,
}

fn term(coeff: f64, i: usize, j: usize) -> Term {
    Term { coeff, i, j }
}

/// Lower shift: `N[j+1, j] = 1`.
fn shift(k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |i, j| if i == j + 1 { 1.0 } else { 0.0 })
}

/// Assemble `[[P, Q], [R, -Pᵀ]]`.
fn hamiltonian_matrix(p: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let m = p.nrows();
    let mut x = DMatrix::zeros(2 * m, 2 * m);
    x.view_mut((0, 0), (m, m)).copy_from(p);
    x.view_mut((0, m), (m, m)).copy_from(q);
    x.view_mut((m, 0), (m, m)).copy_from(r);
    x.view_mut((m, m), (m, m)).copy_from(&(-p.transpose()));
    x
}

/// α-block matrix `Y` for the kinds that keep the Lagrangian splitting.
fn lagrangian_y(kind: &BlockKind) -> Option<DMatrix<f64>> {
    match *kind {
        BlockKind::RealPair { lambda } => Some(DMatrix::from_element(1, 1, lambda.ln())),
        BlockKind::ComplexQuad { modulus, theta } => {
            let l = modulus.ln();
            Some(DMatrix::from_row_slice(2, 2, &[l, -theta, theta, l]))
        }
        BlockKind::RealJordan { lambda, size } => {
            Some(DMatrix::identity(size, size) * lambda.ln() + shift(size))
        }
        BlockKind::ComplexJordan { modulus, theta, size } => {
            let l = modulus.ln();
            let mut y = DMatrix::zeros(2 * size, 2 * size);
            for j in 0..size {
                let (p, m) = (2 * j, 2 * j + 1);
                y[(p, p)] = l;
                y[(m, m)] = l;
                y[(p, m)] = -theta;
                y[(m, p)] = theta;
                if j + 1 < size {
                    y[(p + 2, p)] = 1.0;
                    y[(m + 2, m)] = 1.0;
                }
            }
            Some(y)
        }
        BlockKind::UnipotentLagrangian { size } => Some(shift(size)),
        BlockKind::UnitCircleLagrangian { theta, size } => {
            // α order: α⁺_1..α⁺_k, α⁻_1..α⁻_k
            let k = size;
            let mut y = DMatrix::zeros(2 * k, 2 * k);
            for j in 0..k {
                let rj = k - 1 - j;
                if j + 1 < k {
                    y[(j + 1, j)] = 1.0;
                    y[(k + j, k + j + 1)] = 1.0;
                }
                y[(k + rj, j)] = theta;
                y[(rj, k + j)] = -theta;
            }
            Some(y)
        }
        _ => None,
    }
}

/// Canonical infinitesimal generator `X` of a block and `B = exp(X)`.
pub fn block_generator(kind: &BlockKind) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    kind.validate()?;
    let x = block_x(kind);
    let b = match kind {
        BlockKind::UnipotentLagrangian { .. } | BlockKind::UnipotentNonLagrangian { .. } => nilpotent_exp(&x),
        _ => linalg::expm(&x),
    };
    Ok((x, b))
}

fn block_x(kind: &BlockKind) -> DMatrix<f64> {
    if let Some(y) = lagrangian_y(kind) {
        let m = y.nrows();
        return hamiltonian_matrix(&y, &DMatrix::zeros(m, m), &DMatrix::zeros(m, m));
    }
    match *kind {
        BlockKind::UnitCircleSimple { theta } => DMatrix::from_row_slice(2, 2, &[0.0, -theta, theta, 0.0]),
        BlockKind::UnipotentNonLagrangian { size } => {
            let k = size;
            let mut r = DMatrix::zeros(k, k);
            r[(k - 1, k - 1)] = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            hamiltonian_matrix(&shift(k), &DMatrix::zeros(k, k), &r)
        }
        BlockKind::UnitCircleOddNoSplit { theta, size } => {
            let k = size;
            let mut d = DMatrix::zeros(k, k);
            for p in 0..k {
                // 1-based (-1)^(p+1) is 0-based (-1)^p
                d[(p, k - 1 - p)] = if p % 2 == 0 { 1.0 } else { -1.0 };
            }
            hamiltonian_matrix(&shift(k), &(&d * -theta), &(&d * theta))
        }
        BlockKind::UnitCircleEvenNoSplit { theta, size } => {
            let k = size;
            let mut syy = DMatrix::zeros(k, k);
            let mut sxx = DMatrix::zeros(k, k);
            for p in 0..k {
                syy[(p, k - 1 - p)] = -theta;
                sxx[(p, k - 1 - p)] = -theta;
            }
            // 1-based: S_yy[p, k+2-p] += (-1)^(p-1), p = 2..k
            for p in 2..=k {
                syy[(p - 1, k + 1 - p)] += if (p - 1) % 2 == 0 { 1.0 } else { -1.0 };
            }
            // 1-based: S_xx[j, k-j] += (-1)^j, j = 1..k-1
            for j in 1..k {
                sxx[(j - 1, k - j - 1)] += if j % 2 == 0 { 1.0 } else { -1.0 };
            }
            hamiltonian_matrix(&DMatrix::zeros(k, k), &(-syy), &sxx)
        }
        _ => unreachable!("lagrangian kinds handled above"),
    }
}

fn nilpotent_exp(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=n {
        term = &term * x / k as f64;
        if term.iter().all(|v| *v == 0.0) {
            break;
        }
        out += &term;
    }
    out
}

/// The per-block potential as a list of monomials in local length coordinates.
pub fn block_terms(kind: &BlockKind) -> Result<Vec<Term>> {
    kind.validate()?;
    let m = kind.half_dim();
    let a = |j: usize| j;
    let b = |j: usize| m + j;
    let mut t = Vec::new();
    match *kind {
        BlockKind::RealPair { lambda } => t.push(term(lambda.ln(), a(0), b(0))),
        BlockKind::UnitCircleSimple { theta } => {
            t.push(term(theta / 2.0, a(0), a(0)));
            t.push(term(theta / 2.0, b(0), b(0)));
        }
        BlockKind::ComplexQuad { modulus, theta } => {
            let l = modulus.ln();
            t.push(term(l, a(0), b(0)));
            t.push(term(l, a(1), b(1)));
            t.push(term(theta, a(1), b(0)));
            t.push(term(-theta, a(0), b(1)));
        }
        BlockKind::RealJordan { lambda, size } => {
            for j in 0..size {
                t.push(term(lambda.ln(), a(j), b(j)));
            }
            for j in 0..size.saturating_sub(1) {
                t.push(term(1.0, a(j + 1), b(j)));
            }
        }
        BlockKind::ComplexJordan { modulus, theta, size } => {
            let l = modulus.ln();
            for j in 0..size {
                let (p, q) = (2 * j, 2 * j + 1);
                t.push(term(l, a(p), b(p)));
                t.push(term(l, a(q), b(q)));
                t.push(term(theta, a(q), b(p)));
                t.push(term(-theta, a(p), b(q)));
                if j + 1 < size {
                    t.push(term(1.0, a(p + 2), b(p)));
                    t.push(term(1.0, a(q + 2), b(q)));
                }
            }
        }
        BlockKind::UnipotentLagrangian { size } => {
            for j in 0..size.saturating_sub(1) {
                t.push(term(1.0, a(j + 1), b(j)));
            }
        }
        BlockKind::UnipotentNonLagrangian { size } => {
            let c = if (size / 2) % 2 == 0 { 0.5 } else { -0.5 };
            t.push(term(c, b(size - 1), b(size - 1)));
            for j in 0..size - 1 {
                t.push(term(1.0, a(j + 1), b(j)));
            }
        }
        BlockKind::UnitCircleLagrangian { theta, size } => {
            let k = size;
            let ap = |j: usize| a(j);
            let am = |j: usize| a(k + j);
            let bp = |j: usize| b(j);
            let bm = |j: usize| b(k + j);
            for j in 0..k.saturating_sub(1) {
                t.push(term(1.0, ap(j + 1), bp(j)));
                t.push(term(1.0, am(j), bm(j + 1)));
            }
            for j in 0..k {
                let r = k - 1 - j;
                t.push(term(theta, am(r), bp(j)));
                t.push(term(-theta, ap(r), bm(j)));
            }
        }
        BlockKind::UnitCircleOddNoSplit { theta, size } => {
            let k = size;
            for j in 0..k {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                t.push(term(s * theta / 2.0, a(j), a(k - 1 - j)));
                t.push(term(s * theta / 2.0, b(j), b(k - 1 - j)));
            }
            for j in 0..k - 1 {
                t.push(term(1.0, a(j + 1), b(j)));
            }
        }
        BlockKind::UnitCircleEvenNoSplit { theta, size } => {
            let k = size;
            for j in 0..k {
                t.push(term(-theta / 2.0, a(j), a(k - 1 - j)));
                t.push(term(-theta / 2.0, b(j), b(k - 1 - j)));
            }
            // 1-based: ½ (-1)^j (ℓα_{j+1} ℓα_{k+1-j} + ℓβ_j ℓβ_{k-j}), j = 1..k-1
            for j in 1..k {
                let s = if j % 2 == 0 { 0.5 } else { -0.5 };
                t.push(term(s, a(j), a(k - j)));
                t.push(term(s, b(j - 1), b(k - j - 1)));
            }
        }
    }
    Ok(t)
}

/// A block in a decomposition, with the basis columns holding its α's and β's.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct BlockDecomposition {
    pub blocks: Vec<Block>,
    /// Columns α_1..α_n then β_1..β_n; `basisᵀ Ω basis` is the standard form.
    pub basis: DMatrix<f64>,
}

impl BlockDecomposition {
    pub fn dimension(&self) -> usize {
        self.basis.nrows()
    }

    /// Build from blocks listed in order, laying out α's then β's.
    pub fn from_blocks(kinds: Vec<BlockKind>, basis: DMatrix<f64>) -> Result<Self> {
        let n: usize = kinds.iter().map(|k| k.half_dim()).sum();
        if basis.nrows() != 2 * n || basis.ncols() != 2 * n {
            return Err(Error::ShapeMismatch { expected: 2 * n, found: basis.ncols() });
        }
        let mut blocks = Vec::new();
        let mut off = 0;
        for kind in kinds {
            kind.validate()?;
            let m = kind.half_dim();
            blocks.push(Block { kind, alpha: (off..off + m).collect(), beta: (n + off..n + off + m).collect() });
            off += m;
        }
        Ok(BlockDecomposition { blocks, basis })
    }

    /// Block-diagonal canonical generator in basis coordinates.
    pub fn canonical_x(&self) -> Result<DMatrix<f64>> {
        let d = self.dimension();
        let mut x = DMatrix::zeros(d, d);
        for blk in &self.blocks {
            let (xb, _) = block_generator(&blk.kind)?;
            let idx: Vec<usize> = blk.alpha.iter().chain(&blk.beta).cloned().collect();
            for (i, &gi) in idx.iter().enumerate() {
                for (j, &gj) in idx.iter().enumerate() {
                    x[(gi, gj)] = xb[(i, j)];
                }
            }
        }
        Ok(x)
    }

    /// Block-diagonal canonical action in basis coordinates.
    pub fn canonical_b(&self) -> Result<DMatrix<f64>> {
        let d = self.dimension();
        let mut b = DMatrix::zeros(d, d);
        for blk in &self.blocks {
            let (_, bb) = block_generator(&blk.kind)?;
            let idx: Vec<usize> = blk.alpha.iter().chain(&blk.beta).cloned().collect();
            for (i, &gi) in idx.iter().enumerate() {
                for (j, &gj) in idx.iter().enumerate() {
                    b[(gi, gj)] = bb[(i, j)];
                }
            }
        }
        Ok(b)
    }

    /// `max |basisᵀ Ω basis - J|`.
    pub fn symplectic_basis_residual(&self, omega: &DMatrix<f64>) -> f64 {
        let n = self.dimension() / 2;
        linalg::max_abs(&(self.basis.transpose() * omega * &self.basis - linalg::std_form(n)))
    }

    /// `max |P⁻¹ B P - canonical|`.
    pub fn canonical_residual(&self, b: &DMatrix<f64>) -> Result<f64> {
        let pinv = self.basis.clone().try_inverse().ok_or(Error::DecompositionMismatch { residual: f64::INFINITY })?;
        Ok(linalg::max_abs(&(pinv * b * &self.basis - self.canonical_b()?)))
    }

    /// Generator in ambient coordinates: `P X_canonical P⁻¹`.
    pub fn ambient_x(&self) -> Result<DMatrix<f64>> {
        let pinv = self.basis.clone().try_inverse().ok_or(Error::DecompositionMismatch { residual: f64::INFINITY })?;
        Ok(&self.basis * self.canonical_x()? * pinv)
    }

    /// Rescale the pair (α, β) at basis positions (i, n+i) by (c, 1/c).
    pub fn rescale_pair(&mut self, i: usize, c: f64) {
        let n = self.dimension() / 2;
        let mut a = self.basis.column_mut(i);
        a *= c;
        let mut b = self.basis.column_mut(n + i);
        b /= c;
    }
}

#[derive(Clone, Debug)]
pub struct EigenOptions {
    pub tol: f64,
    pub condition_cap: f64,
    pub cluster_tol: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { tol: 1e-8, condition_cap: DEFAULT_CONDITION_CAP, cluster_tol: 1e-6 }
    }
}

struct Cluster {
    value: C64,
    mult: usize,
}

fn clusters(spec: &[C64], tol: f64) -> Vec<Cluster> {
    let mut out: Vec<(C64, usize)> = Vec::new();
    for z in spec {
        if let Some(c) = out.iter_mut().find(|(w, _)| (w - z).norm() <= tol * w.norm().max(1.0)) {
            let n = c.1 as f64;
            c.0 = (c.0 * n + z) / (n + 1.0);
            c.1 += 1;
        } else {
            out.push((*z, 1));
        }
    }
    out.into_iter().map(|(value, mult)| Cluster { value, mult }).collect()
}

fn complex_eigvecs(b: &DMatrix<f64>, lambda: C64, mult: usize, scale: f64) -> Result<DMatrix<C64>> {
    let n = b.nrows();
    let shifted = linalg::to_complex(b) - DMatrix::<C64>::identity(n, n) * lambda;
    let (v, worst) = linalg::near_null_space(&shifted, mult);
    if worst > 1e-6 * scale {
        return Err(Error::NotDiagonalizable { condition: f64::INFINITY });
    }
    Ok(v)
}

fn real_eigvecs(b: &DMatrix<f64>, lambda: f64, mult: usize, scale: f64) -> Result<DMatrix<f64>> {
    let v = complex_eigvecs(b, C64::new(lambda, 0.0), mult, scale)?;
    // a real eigenspace has a real orthonormal basis; recover it from real and imaginary parts
    let n = b.nrows();
    let mut stacked = DMatrix::<f64>::zeros(n, 2 * mult);
    for j in 0..mult {
        for i in 0..n {
            stacked[(i, j)] = v[(i, j)].re;
            stacked[(i, mult + j)] = v[(i, j)].im;
        }
    }
    let svd = stacked.svd(true, false);
    let u = svd.u.expect("requested u");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &c| svd.singular_values[c].partial_cmp(&svd.singular_values[a]).unwrap());
    Ok(DMatrix::from_fn(n, mult, |i, j| u[(i, order[j])]))
}

/// Symplectic basis of eigenvectors for a symplectic `b` diagonalizable over ℂ.
pub fn symplectic_eigenbasis(b: &DMatrix<f64>, omega: &DMatrix<f64>, opts: &EigenOptions) -> Result<BlockDecomposition> {
    let d = b.nrows();
    if d % 2 == 1 || omega.nrows() != d {
        return Err(Error::ShapeMismatch { expected: d + d % 2, found: omega.nrows() });
    }
    let scale = b.amax().max(1.0);
    let sres = linalg::symplectic_residual(b, omega);
    if sres > opts.tol * scale * scale.max(omega.amax()) {
        return Err(Error::NotSymplectic { residual: sres });
    }
    let spec = linalg::eigenvalues(b);
    for z in &spec {
        if z.re < 0.0 && z.im.abs() <= opts.cluster_tol * z.norm().max(1.0) {
            return Err(Error::NegativeRealEigenvalue { value: z.re });
        }
    }
    let mut cl = clusters(&spec, opts.cluster_tol);
    cl.sort_by(|a, c| linalg::spectral_order(&a.value, &c.value));
    let on_circle = |z: C64| (z.norm() - 1.0).abs() <= opts.cluster_tol;
    let is_real = |z: C64| z.im.abs() <= opts.cluster_tol * z.norm().max(1.0);

    let mut alphas: Vec<DVector<f64>> = Vec::new();
    let mut betas: Vec<DVector<f64>> = Vec::new();
    let mut kinds: Vec<BlockKind> = Vec::new();
    let mut all_vecs: Vec<DMatrix<C64>> = Vec::new();
    let ompair = |u: &DVector<f64>, v: &DVector<f64>| linalg::form(omega, u, v);

    for c in &cl {
        let z = c.value;
        if z.im < 0.0 && !is_real(z) {
            continue;
        }
        if is_real(z) && !on_circle(z) {
            if z.re < 1.0 {
                continue;
            }
            let lam = z.re;
            let a = real_eigvecs(b, lam, c.mult, scale)?;
            let partner = cl
                .iter()
                .find(|w| (w.value - C64::new(1.0 / lam, 0.0)).norm() <= opts.cluster_tol * 10.0)
                .ok_or(Error::NotReciprocal { residual: 1.0 })?;
            if partner.mult != c.mult {
                return Err(Error::NotReciprocal { residual: 1.0 });
            }
            let bb = real_eigvecs(b, 1.0 / lam, c.mult, scale)?;
            let g = a.transpose() * omega * &bb;
            let ginv = g.try_inverse().ok_or(Error::DegenerateForm)?;
            let bb = bb * ginv;
            all_vecs.push(linalg::to_complex(&a));
            all_vecs.push(linalg::to_complex(&bb));
            for j in 0..c.mult {
                alphas.push(a.column(j).into_owned());
                betas.push(bb.column(j).into_owned());
                kinds.push(BlockKind::RealPair { lambda: lam });
            }
        } else if is_real(z) {
            // eigenvalue 1: symplectic Gram-Schmidt on the eigenspace
            let e = real_eigvecs(b, 1.0, c.mult, scale)?;
            all_vecs.push(linalg::to_complex(&e));
            let mut pool: Vec<DVector<f64>> = (0..e.ncols()).map(|j| e.column(j).into_owned()).collect();
            while !pool.is_empty() {
                let a = pool.remove(0);
                let (k, w) = pool
                    .iter()
                    .enumerate()
                    .map(|(k, v)| (k, ompair(&a, v)))
                    .max_by(|x, y| x.1.abs().partial_cmp(&y.1.abs()).unwrap())
                    .ok_or(Error::DegenerateForm)?;
                if w.abs() < 1e-12 {
                    return Err(Error::DegenerateForm);
                }
                let bvec = pool.remove(k) / w;
                pool = pool
                    .into_iter()
                    .map(|v| {
                        let (vb, va) = (ompair(&v, &bvec), ompair(&v, &a));
                        v - vb * &a + va * &bvec
                    })
                    .collect();
                alphas.push(a);
                betas.push(bvec);
                kinds.push(BlockKind::UnitCircleSimple { theta: 0.0 });
            }
        } else if on_circle(z) {
            let theta = z.arg();
            let v = complex_eigvecs(b, z, c.mult, scale)?;
            all_vecs.push(v.clone());
            all_vecs.push(v.map(|x| x.conj()));
            let omc = linalg::to_complex(omega);
            // H(v, u) = -(i/2) ω(v, ū) is Hermitian; diagonalize it
            let h = (v.transpose() * &omc * v.map(|x| x.conj())) * C64::new(0.0, -0.5);
            let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
            let eig = h.symmetric_eigen();
            for k in 0..c.mult {
                let dk = eig.eigenvalues[k];
                if dk.abs() < 1e-12 {
                    return Err(Error::DegenerateForm);
                }
                let col = &v * eig.eigenvectors.column(k) / C64::new(dk.abs().sqrt(), 0.0);
                let re = col.map(|x| x.re);
                let im = col.map(|x| x.im);
                if dk > 0.0 {
                    alphas.push(re);
                    betas.push(-im);
                    kinds.push(BlockKind::UnitCircleSimple { theta });
                } else {
                    alphas.push(re);
                    betas.push(im);
                    kinds.push(BlockKind::UnitCircleSimple { theta: -theta });
                }
            }
        } else {
            if z.norm() < 1.0 {
                continue;
            }
            let theta = z.arg();
            let modulus = z.norm();
            let v = complex_eigvecs(b, z, c.mult, scale)?;
            let partner_val = z.conj().inv();
            let partner = cl
                .iter()
                .find(|w| (w.value - partner_val).norm() <= opts.cluster_tol * 10.0)
                .ok_or(Error::NotReciprocal { residual: 1.0 })?;
            if partner.mult != c.mult {
                return Err(Error::NotReciprocal { residual: 1.0 });
            }
            let u = complex_eigvecs(b, partner.value, c.mult, scale)?;
            for m in [&v, &u] {
                all_vecs.push(m.clone());
                all_vecs.push(m.map(|x| x.conj()));
            }
            let n = b.nrows();
            let mut a = DMatrix::<f64>::zeros(n, 2 * c.mult);
            let mut bb = DMatrix::<f64>::zeros(n, 2 * c.mult);
            for j in 0..c.mult {
                for i in 0..n {
                    a[(i, 2 * j)] = v[(i, j)].re;
                    a[(i, 2 * j + 1)] = -v[(i, j)].im;
                    bb[(i, 2 * j)] = u[(i, j)].re;
                    bb[(i, 2 * j + 1)] = -u[(i, j)].im;
                }
            }
            let g = a.transpose() * omega * &bb;
            let ginv = g.try_inverse().ok_or(Error::DegenerateForm)?;
            let bb = bb * ginv;
            for j in 0..c.mult {
                alphas.push(a.column(2 * j).into_owned());
                alphas.push(a.column(2 * j + 1).into_owned());
                betas.push(bb.column(2 * j).into_owned());
                betas.push(bb.column(2 * j + 1).into_owned());
                kinds.push(BlockKind::ComplexQuad { modulus, theta });
            }
        }
    }

    let n = alphas.len();
    if 2 * n != d {
        return Err(Error::NotDiagonalizable { condition: f64::INFINITY });
    }
    let mut evecs = DMatrix::<C64>::zeros(d, d);
    let mut col = 0;
    for m in &all_vecs {
        for j in 0..m.ncols() {
            if col < d {
                let c = m.column(j);
                evecs.set_column(col, &(c / C64::new(c.norm(), 0.0)));
            }
            col += 1;
        }
    }
    if col != d {
        return Err(Error::NotDiagonalizable { condition: f64::INFINITY });
    }
    let cond = linalg::condition_number(&evecs);
    if cond > opts.condition_cap {
        return Err(Error::NotDiagonalizable { condition: cond });
    }
    let mut basis = DMatrix::zeros(d, d);
    for (j, a) in alphas.iter().enumerate() {
        basis.set_column(j, a);
    }
    for (j, bv) in betas.iter().enumerate() {
        basis.set_column(n + j, bv);
    }
    BlockDecomposition::from_blocks(kinds, basis)
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub x: DMatrix<f64>,
    pub source: DMatrix<f64>,
    /// Relative error `|exp(X) - B| / |B|`.
    pub residual: f64,
    pub tolerance: f64,
}

impl Generator {
    pub fn hamiltonian_residual(&self, omega: &DMatrix<f64>) -> f64 {
        linalg::hamiltonian_residual(&self.x, omega)
    }
}

/// Principal real logarithm, branch `arg ∈ (-π, π)`.
pub fn principal_log(b: &DMatrix<f64>) -> Result<Generator> {
    let n = b.nrows();
    if b.ncols() != n {
        return Err(Error::ShapeMismatch { expected: n, found: b.ncols() });
    }
    let spec = linalg::eigenvalues(b);
    for z in &spec {
        if z.norm() < 1e-14 || (z.re <= 0.0 && z.im.abs() <= 1e-10 * z.norm().max(1.0)) {
            return Err(Error::SpectrumOnCut { re: z.re, im: z.im });
        }
    }
    let x = match eigen_log(b, &spec) {
        Some(x) => x,
        None => inverse_scaling_squaring_log(b)?,
    };
    let residual = linalg::max_abs(&(linalg::expm(&x) - b)) / linalg::max_abs(b).max(1e-300);
    let x = if residual > 1e-9 {
        // eigen route was too inaccurate; retry through square roots
        inverse_scaling_squaring_log(b)?
    } else {
        x
    };
    let residual = linalg::max_abs(&(linalg::expm(&x) - b)) / linalg::max_abs(b).max(1e-300);
    Ok(Generator { x, source: b.clone(), residual, tolerance: 1e-9 })
}

fn eigen_log(b: &DMatrix<f64>, spec: &[C64]) -> Option<DMatrix<f64>> {
    let n = b.nrows();
    let scale = b.amax().max(1.0);
    let cl = clusters(spec, 1e-6);
    let mut v = DMatrix::<C64>::zeros(n, n);
    let mut logs = Vec::with_capacity(n);
    let mut col = 0;
    for c in &cl {
        let vecs = complex_eigvecs(b, c.value, c.mult, scale).ok()?;
        for j in 0..c.mult {
            v.set_column(col, &vecs.column(j));
            logs.push(c.value.ln());
            col += 1;
        }
    }
    if linalg::condition_number(&v) > DEFAULT_CONDITION_CAP {
        return None;
    }
    let vinv = v.clone().try_inverse()?;
    let l = DMatrix::from_diagonal(&DVector::from_vec(logs));
    let xc = &v * l * vinv;
    let imag = xc.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    if imag > IMAG_DISCARD.max(1e-8 * xc.iter().fold(0.0f64, |a, z| a.max(z.re.abs()))) {
        return None;
    }
    Some(xc.map(|z| z.re))
}

fn sqrtm_db(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::identity(n, n);
    for _ in 0..100 {
        let yi = y.clone().try_inverse().ok_or(Error::SpectrumOnCut { re: 0.0, im: 0.0 })?;
        let zi = z.clone().try_inverse().ok_or(Error::SpectrumOnCut { re: 0.0, im: 0.0 })?;
        let ny = (&y + zi) * 0.5;
        let nz = (&z + yi) * 0.5;
        let delta = linalg::max_abs(&(&ny - &y)) / linalg::max_abs(&ny).max(1e-300);
        y = ny;
        z = nz;
        if delta < 1e-15 {
            break;
        }
    }
    Ok(y)
}

fn inverse_scaling_squaring_log(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut a = b.clone();
    let mut s = 0;
    while (&a - &id).norm() > 0.2 {
        a = sqrtm_db(&a)?;
        s += 1;
        if s > 60 {
            return Err(Error::NoConvergence { iterations: s });
        }
    }
    let e = &a - &id;
    let mut sum = DMatrix::zeros(n, n);
    let mut pow = e.clone();
    for k in 1..200 {
        let t = &pow / k as f64;
        if k % 2 == 1 {
            sum += &t;
        } else {
            sum -= &t;
        }
        if linalg::max_abs(&t) < 1e-18 {
            break;
        }
        pow = &pow * &e;
    }
    Ok(sum * 2f64.powi(s as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_log_is_zero() {
        let g = principal_log(&DMatrix::identity(4, 4)).unwrap();
        assert!(g.x.amax() < 1e-14);
    }

    #[test]
    fn negative_eigenvalue_is_on_cut() {
        let b = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -0.5]);
        assert!(matches!(principal_log(&b), Err(Error::SpectrumOnCut { .. })));
    }

    #[test]
    fn unipotent_log_uses_square_roots() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let g = principal_log(&b).unwrap();
        assert!((g.x[(0, 1)] - 1.0).abs() < 1e-12);
        assert!(g.x[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn bad_params() {
        assert!(block_generator(&BlockKind::RealPair { lambda: 0.5 }).is_err());
        assert!(block_generator(&BlockKind::UnipotentNonLagrangian { size: 3 }).is_err());
        assert!(block_generator(&BlockKind::UnitCircleOddNoSplit { theta: 1.0, size: 2 }).is_err());
    }
}
