//! Floating-point helpers shared by the spectral modules.

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;

pub const DEFAULT_TOL: f64 = 1e-9;

/// Default tolerance, overridden by `PAFLOW_TOL` when it parses as a positive float.
pub fn default_tol() -> f64 {
    std::env::var("PAFLOW_TOL")
        .ok()
        .and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|t| *t > 0.0 && t.is_finite())
        .unwrap_or(DEFAULT_TOL)
}

/// Standard form `[[0, I], [-I, 0]]` on `R^{2n}`.
pub fn std_form(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

pub fn expm(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().exp()
}

/// `max |B^T Ω B - Ω|`.
pub fn symplectic_residual(b: &DMatrix<f64>, omega: &DMatrix<f64>) -> f64 {
    max_abs(&(b.transpose() * omega * b - omega))
}

/// `max |X^T Ω + Ω X|`, zero exactly when ω(Xv, w) = -ω(v, Xw).
pub fn hamiltonian_residual(x: &DMatrix<f64>, omega: &DMatrix<f64>) -> f64 {
    max_abs(&(x.transpose() * omega + omega * x))
}

pub fn form(omega: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    (u.transpose() * omega * v)[(0, 0)]
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<C64> {
    m.clone().complex_eigenvalues().iter().cloned().collect()
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

pub fn condition_number(m: &DMatrix<C64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Orthonormal basis for the `dim` smallest right singular directions of `m`,
/// plus the largest singular value among them.
pub fn near_null_space(m: &DMatrix<C64>, dim: usize) -> (DMatrix<C64>, f64) {
    let n = m.ncols();
    // pad to square so that the SVD exposes all right singular vectors
    let mut sq = DMatrix::<C64>::zeros(n.max(m.nrows()), n);
    sq.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[a].partial_cmp(&sv[b]).unwrap());
    let mut basis = DMatrix::<C64>::zeros(n, dim);
    let mut worst: f64 = 0.0;
    for (c, &k) in order.iter().take(dim).enumerate() {
        worst = worst.max(sv[k]);
        for i in 0..n {
            basis[(i, c)] = vt[(k, i)].conj();
        }
    }
    (basis, worst)
}

/// Sort key: modulus descending, then argument in `[0, π]` ascending.
pub fn spectral_order(a: &C64, b: &C64) -> std::cmp::Ordering {
    let (ma, mb) = (a.norm(), b.norm());
    if (ma - mb).abs() > 1e-12 * ma.max(mb).max(1.0) {
        return mb.partial_cmp(&ma).unwrap();
    }
    let (aa, ab) = (a.arg().abs(), b.arg().abs());
    aa.partial_cmp(&ab).unwrap().then(b.im.partial_cmp(&a.im).unwrap())
}

/// Greedy matching residual between a multiset and its elementwise inverse.
pub fn reciprocal_residual(spec: &[C64]) -> f64 {
    let inv: Vec<C64> = spec.iter().map(|z| z.inv()).collect();
    let mut used = vec![false; spec.len()];
    let mut worst: f64 = 0.0;
    for z in spec {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (j, w) in inv.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (z - w).norm() / z.norm().max(1.0);
            if d < best_d {
                best_d = d;
                best = Some(j);
            }
        }
        if let Some(j) = best {
            used[j] = true;
        }
        worst = worst.max(best_d);
    }
    worst
}
