//! Pseudo-Anosov linear data: Perron-Frobenius analysis, the symplectic action
//! on weight space, and a curve-coordinate twist model for examples.

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::rational::QMat;
use crate::tracks::{self, IncidenceMatrix, SymplecticSpace, TrainTrack, WeightSpace};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const TWISTS_SCHEMA: &str = "twists/1";
pub const MAX_ITERATIONS: usize = 1_000_000;
pub const POWER_TOL: f64 = 1e-12;
pub const MAX_POWER: usize = 64;

/// Strict positivity of some power `M^p`, `p <= n^2`, on the zero pattern.
pub fn primitivity_exponent(m: &DMatrix<f64>) -> Option<usize> {
    let n = m.nrows();
    if n == 0 {
        return None;
    }
    let a: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| m[(i, j)] > 0.0).collect()).collect();
    let mut p = a.clone();
    for k in 1..=n * n {
        if p.iter().all(|r| r.iter().all(|&x| x)) {
            return Some(k);
        }
        let next: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..n).map(|j| (0..n).any(|l| p[i][l] && a[l][j])).collect())
            .collect();
        if next == p {
            return None;
        }
        p = next;
    }
    None
}

/// Spectral radius and positive eigenvector (unit 1-norm) of a primitive matrix.
pub fn perron_frobenius(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::ShapeMismatch { expected: n, found: m.ncols() });
    }
    if m.iter().any(|x| *x < 0.0 || !x.is_finite()) {
        return Err(Error::NotPrimitive);
    }
    primitivity_exponent(m).ok_or(Error::NotPrimitive)?;
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut lambda = 0.0;
    for it in 0..MAX_ITERATIONS {
        let w = m * &v;
        // Rayleigh-type quotient for a positive vector
        let rq = v.dot(&w) / v.dot(&v);
        let next = &w / w.sum();
        let resid = (m * &next - rq * &next).amax();
        let settled = (rq - lambda).abs() <= POWER_TOL * rq.max(1.0) && resid <= POWER_TOL * rq.max(1.0);
        lambda = rq;
        v = next;
        if settled && it > 0 {
            let lam = (m * &v).sum() / v.sum();
            return Ok((lam, v));
        }
    }
    Err(Error::NoConvergence { iterations: MAX_ITERATIONS })
}

#[derive(Clone, Debug)]
pub struct PseudoAnosovData {
    pub k: usize,
    /// Action of the k-th power on weight-space coordinates.
    pub b: DMatrix<f64>,
    /// Exact action of the first power.
    pub b_exact: QMat,
    pub omega: SymplecticSpace,
    /// Stretch factor of the mapping class itself; B has Λ^k on `mu_plus`.
    pub lambda: f64,
    /// Weight-space coordinates of the positive eigenvector.
    pub mu_plus: DVector<f64>,
    /// Branch weights of the positive eigenvector, unit 1-norm.
    pub mu_plus_branches: DVector<f64>,
    pub spectrum: Vec<C64>,
    pub tol: f64,
}

impl PseudoAnosovData {
    pub fn stretch_power(&self) -> f64 {
        self.lambda.powi(self.k as i32)
    }

    pub fn symplectic_residual(&self) -> f64 {
        linalg::symplectic_residual(&self.b, &self.omega.form)
    }

    pub fn eigen_residual(&self) -> f64 {
        (&self.b * &self.mu_plus - self.stretch_power() * &self.mu_plus).amax() / self.mu_plus.amax()
    }

    pub fn reciprocal_residual(&self) -> f64 {
        linalg::reciprocal_residual(&self.spectrum)
    }
}

fn sorted_spectrum(b: &DMatrix<f64>) -> Vec<C64> {
    let mut s = linalg::eigenvalues(b);
    s.sort_by(linalg::spectral_order);
    s
}

fn has_negative_real(spec: &[C64], tol: f64) -> Option<f64> {
    spec.iter().find(|z| z.re < 0.0 && z.im.abs() <= tol.max(1e-8) * z.norm().max(1.0)).map(|z| z.re)
}

/// Smallest power `k = 2^j <= 64` of `b` without negative real eigenvalues.
pub fn settle_power(b: &DMatrix<f64>, tol: f64) -> Result<(usize, DMatrix<f64>, Vec<C64>)> {
    let mut k = 1;
    let mut bk = b.clone();
    loop {
        let spec = sorted_spectrum(&bk);
        match has_negative_real(&spec, tol) {
            None => return Ok((k, bk, spec)),
            Some(v) if k >= MAX_POWER => return Err(Error::NegativeRealEigenvalue { value: v }),
            Some(_) => {
                bk = &bk * &bk;
                k *= 2;
            }
        }
    }
}

/// Symplectic action of an invariant-track incidence matrix on weight space.
pub fn build_linear_action(m: &IncidenceMatrix, track: &TrainTrack, tol: f64) -> Result<PseudoAnosovData> {
    let ws = tracks::weight_space(track)?;
    build_linear_action_on(m, track, &ws, tol)
}

pub fn build_linear_action_on(
    m: &IncidenceMatrix,
    track: &TrainTrack,
    ws: &WeightSpace,
    tol: f64,
) -> Result<PseudoAnosovData> {
    let form = tracks::thurston_form(track, &ws.basis)?;
    if form.degenerate {
        return Err(Error::DegenerateForm);
    }
    let b_exact = tracks::restrict_to_weights(m, ws, ws)?;
    let omega = form.space;
    let b1 = b_exact.to_f64();
    if b_exact.transpose().mul(&form.exact).mul(&b_exact) != form.exact {
        return Err(Error::NotSymplectic { residual: linalg::symplectic_residual(&b1, &omega.form) });
    }
    let spec1 = sorted_spectrum(&b1);
    let radius = spec1.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if radius <= 1.0 + tol.max(1e-9) {
        return Err(Error::NotPseudoAnosov { radius });
    }
    let rr = linalg::reciprocal_residual(&spec1);
    if rr > 1e-8_f64.max(tol) {
        return Err(Error::NotReciprocal { residual: rr });
    }
    let (lambda, pf) = perron_frobenius(&m.to_f64())?;
    if (lambda - radius).abs() > 1e-8 * radius {
        return Err(Error::NotPseudoAnosov { radius });
    }
    if track.switch_residual(pf.as_slice()) > 1e-9 {
        return Err(Error::BadParams("Perron-Frobenius vector violates switch conditions".into()));
    }
    let mu_plus = ws.coords_f64(&pf);
    let (k, b, spectrum) = settle_power(&b1, tol)?;
    let data = PseudoAnosovData {
        k,
        b,
        b_exact,
        omega,
        lambda,
        mu_plus,
        mu_plus_branches: pf,
        spectrum,
        tol,
    };
    let sres = data.symplectic_residual();
    if sres > tol.max(1e-9) * data.b.amax().max(1.0) {
        return Err(Error::NotSymplectic { residual: sres });
    }
    Ok(data)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwistSystem {
    pub curves: Vec<String>,
    pub intersections: Vec<Vec<u64>>,
    pub signs: Vec<i8>,
}

#[derive(Serialize, Deserialize)]
struct TwistsFile {
    schema: String,
    curves: Vec<String>,
    intersections: Vec<Vec<u64>>,
    signs: Vec<i8>,
}

impl TwistSystem {
    pub fn new(curves: Vec<String>, intersections: Vec<Vec<u64>>, signs: Vec<i8>) -> Result<Self> {
        let n = curves.len();
        if intersections.len() != n || intersections.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch { expected: n, found: intersections.len() });
        }
        if signs.len() != n {
            return Err(Error::ShapeMismatch { expected: n, found: signs.len() });
        }
        for i in 0..n {
            if !(signs[i] == 1 || signs[i] == -1) {
                return Err(Error::BadParams(format!("sign of curve {i} must be ±1")));
            }
            if intersections[i][i] != 0 {
                return Err(Error::BadParams(format!("curve {i} meets itself")));
            }
            for j in 0..n {
                if intersections[i][j] != intersections[j][i] {
                    return Err(Error::BadParams("intersection matrix is not symmetric".into()));
                }
                if signs[i] == signs[j] && intersections[i][j] != 0 {
                    return Err(Error::BadParams(format!("curves {i} and {j} share a family but intersect")));
                }
            }
        }
        Ok(TwistSystem { curves, intersections, signs })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: TwistsFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if f.schema != TWISTS_SCHEMA {
            return Err(Error::Parse(format!("expected schema {TWISTS_SCHEMA}, found {}", f.schema)));
        }
        Self::new(f.curves, f.intersections, f.signs)
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    fn elementary(&self, c: usize, coeff: i64) -> DMatrix<i64> {
        let n = self.len();
        let mut m = DMatrix::<i64>::identity(n, n);
        for j in 0..n {
            m[(c, j)] += coeff * self.intersections[c][j] as i64;
        }
        m
    }
}

/// Product of the elementary twist matrices `I + s_c e E_c`, where `E_c` has the
/// intersection row of `c` in row `c`. Exponents must agree with the family signs.
pub fn twist_word_matrix(sys: &TwistSystem, word: &[(usize, i64)]) -> Result<DMatrix<i64>> {
    for &(c, e) in word {
        if c >= sys.len() {
            return Err(Error::ShapeMismatch { expected: sys.len(), found: c });
        }
        if e != 0 && (e > 0) != (sys.signs[c] > 0) {
            return Err(Error::SignViolation { curve: c, exponent: e });
        }
    }
    twist_word_matrix_unchecked(sys, word)
}

/// As `twist_word_matrix` without the sign check; used for inverse words.
pub fn twist_word_matrix_unchecked(sys: &TwistSystem, word: &[(usize, i64)]) -> Result<DMatrix<i64>> {
    let n = sys.len();
    let mut m = DMatrix::<i64>::identity(n, n);
    for &(c, e) in word {
        if c >= n {
            return Err(Error::ShapeMismatch { expected: n, found: c });
        }
        m *= sys.elementary(c, sys.signs[c] as i64 * e);
    }
    Ok(m)
}

pub fn reverse_inverse(word: &[(usize, i64)]) -> Vec<(usize, i64)> {
    word.iter().rev().map(|&(c, e)| (c, -e)).collect()
}
