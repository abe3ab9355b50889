//! Fuchsian-group harness: isometries of the upper half plane, axes, crossings
//! of lifted geodesics, twist deformations and the cosine formula.
//!
//! Boundary points are homogeneous pairs (x : y) standing for x/y, so ∞ = (1 : 0).

use crate::error::{Error, Result};
use crate::linalg::C64;
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub type Mat2 = Matrix2<f64>;

pub const REP_SCHEMA: &str = "rep/1";
pub const DEFAULT_DEPTH: usize = 8;
/// The genus-2 ball grows like 7^depth, so its default radius is smaller.
pub const GENUS2_DEPTH: usize = 5;
const ENDPOINT_TOL: f64 = 1e-12;
const DEDUP_TOL: f64 = 1e-9;
const FD_STEP: f64 = 1e-4;

/// Generic base point for twist cocycles; chosen off every lift in the shipped examples.
pub fn base_point() -> C64 {
    C64::new(0.1234, 1.0567)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub x: f64,
    pub y: f64,
}

impl BoundaryPoint {
    pub fn finite(r: f64) -> Self {
        BoundaryPoint { x: r, y: 1.0 }
    }

    pub fn infinity() -> Self {
        BoundaryPoint { x: 1.0, y: 0.0 }
    }

    fn unit(self) -> Self {
        let n = self.x.hypot(self.y);
        BoundaryPoint { x: self.x / n, y: self.y / n }
    }

    /// Real value, `±inf` at infinity.
    pub fn value(self) -> f64 {
        self.x / self.y
    }

    /// Position on the circle in (-π, π], increasing with the value.
    pub fn angle(self) -> f64 {
        let (x, y) = if self.y < 0.0 || (self.y == 0.0 && self.x < 0.0) { (-self.x, -self.y) } else { (self.x, self.y) };
        2.0 * x.atan2(y)
    }

    pub fn same(self, other: Self, tol: f64) -> bool {
        let (a, b) = (self.unit(), other.unit());
        (a.x * b.y - a.y * b.x).abs() < tol
    }

    pub fn apply(m: &Mat2, p: Self) -> Self {
        BoundaryPoint { x: m[(0, 0)] * p.x + m[(0, 1)] * p.y, y: m[(1, 0)] * p.x + m[(1, 1)] * p.y }.unit()
    }
}

pub fn mobius(m: &Mat2, z: C64) -> C64 {
    (z * m[(0, 0)] + m[(0, 1)]) / (z * m[(1, 0)] + m[(1, 1)])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IsometryKind {
    Hyperbolic,
    Parabolic,
    Elliptic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Isometry {
    pub m: Mat2,
    pub kind: IsometryKind,
}

impl Isometry {
    pub fn new(m: Mat2) -> Result<Self> {
        let det = m.determinant();
        if (det - 1.0).abs() >= 1e-12 * m.amax().max(1.0).powi(2) {
            return Err(Error::BadParams(format!("determinant {det} is not 1")));
        }
        Ok(Isometry { m, kind: classify(&m) })
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }
}

pub fn classify(m: &Mat2) -> IsometryKind {
    let t = m.trace().abs();
    if (t - 2.0).abs() <= 1e-12 {
        IsometryKind::Parabolic
    } else if t > 2.0 {
        IsometryKind::Hyperbolic
    } else {
        IsometryKind::Elliptic
    }
}

/// Translation length from `2 exp(ℓ/2) = τ + sqrt(τ² - 4)`.
pub fn trace_length(m: &Mat2) -> Result<f64> {
    let tau = m.trace().abs();
    if tau <= 2.0 + 1e-12 {
        return Err(Error::NotHyperbolic { trace: m.trace() });
    }
    Ok(2.0 * ((tau + (tau * tau - 4.0).sqrt()) / 2.0).ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geodesic {
    pub a: BoundaryPoint,
    pub b: BoundaryPoint,
}

impl Geodesic {
    pub fn new(a: BoundaryPoint, b: BoundaryPoint) -> Result<Self> {
        if a.same(b, ENDPOINT_TOL) {
            return Err(Error::SharedEndpoint);
        }
        Ok(Geodesic { a, b })
    }

    pub fn from_reals(a: f64, b: f64) -> Result<Self> {
        let p = |r: f64| if r.is_infinite() { BoundaryPoint::infinity() } else { BoundaryPoint::finite(r) };
        Self::new(p(a), p(b))
    }

    pub fn image(&self, m: &Mat2) -> Geodesic {
        Geodesic { a: BoundaryPoint::apply(m, self.a), b: BoundaryPoint::apply(m, self.b) }
    }

    pub fn reversed(&self) -> Geodesic {
        Geodesic { a: self.b, b: self.a }
    }

    fn shares_endpoint(&self, other: &Geodesic) -> bool {
        [self.a, self.b].iter().any(|p| p.same(other.a, ENDPOINT_TOL) || p.same(other.b, ENDPOINT_TOL))
    }

    fn same_as(&self, other: &Geodesic, tol: f64) -> bool {
        (self.a.same(other.a, tol) && self.b.same(other.b, tol)) || (self.a.same(other.b, tol) && self.b.same(other.a, tol))
    }
}

/// Orientation-preserving unimodular map sending `g.a` to 0 and `g.b` to ∞.
pub fn normalizer(g: &Geodesic) -> Mat2 {
    let (a, b) = (g.a.unit(), g.b.unit());
    let mut m = Mat2::new(a.y, -a.x, b.y, -b.x);
    let det = m.determinant();
    if det < 0.0 {
        m[(0, 0)] = -m[(0, 0)];
        m[(0, 1)] = -m[(0, 1)];
    }
    m / det.abs().sqrt()
}

/// Fixed points ordered (repelling, attracting).
pub fn axis(m: &Mat2) -> Result<Geodesic> {
    let t = m.trace();
    if t.abs() <= 2.0 + 1e-12 {
        return Err(Error::NotHyperbolic { trace: t });
    }
    let s = (t * t - 4.0).sqrt();
    let big = if t > 0.0 { (t + s) / 2.0 } else { (t - s) / 2.0 };
    let small = 1.0 / big;
    let eig = |l: f64| {
        let u = BoundaryPoint { x: m[(0, 1)], y: l - m[(0, 0)] };
        let v = BoundaryPoint { x: l - m[(1, 1)], y: m[(1, 0)] };
        if u.x.hypot(u.y) >= v.x.hypot(v.y) { u.unit() } else { v.unit() }
    };
    Geodesic::new(eig(small), eig(big))
}

/// True iff exactly one endpoint of `g2` lies on each side of `g1`.
pub fn interlaced(g1: &Geodesic, g2: &Geodesic) -> Result<bool> {
    if g1.shares_endpoint(g2) {
        return Err(Error::SharedEndpoint);
    }
    let n = normalizer(g1);
    let (p, q) = (BoundaryPoint::apply(&n, g2.a), BoundaryPoint::apply(&n, g2.b));
    Ok(p.value() * q.value() < 0.0)
}

/// Cosine of the crossing angle from `g_ref` to `g`: with `g` moved to (0, ∞)
/// and `g_ref` to (a, b), a < 0 < b, the value is `-(b + a)/(b - a)`.
pub fn cos_from(g_ref: &Geodesic, g: &Geodesic) -> Result<f64> {
    if !interlaced(g_ref, g).map_err(|_| Error::NotTransverse)? {
        return Err(Error::NotTransverse);
    }
    let n = normalizer(g);
    let (p, q) = (BoundaryPoint::apply(&n, g_ref.a), BoundaryPoint::apply(&n, g_ref.b));
    // homogeneous form of -(b + a)/(b - a) with a = p, b = q
    let num = p.x * q.y + q.x * p.y;
    let den = q.x * p.y - p.x * q.y;
    let c = -num / den;
    Ok(if p.value() < 0.0 { c } else { -c })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Surface {
    #[serde(rename = "punctured-torus")]
    PuncturedTorus,
    #[serde(rename = "genus2")]
    Genus2,
}

impl Surface {
    pub fn default_depth(self) -> usize {
        match self {
            Surface::PuncturedTorus => DEFAULT_DEPTH,
            Surface::Genus2 => GENUS2_DEPTH,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FuchsianRep {
    pub surface: Surface,
    pub names: Vec<char>,
    pub gens: Vec<Mat2>,
}

#[derive(Serialize, Deserialize)]
struct RepFile {
    schema: String,
    surface: Surface,
    generators: BTreeMap<String, [[f64; 2]; 2]>,
}

/// A letter: generator index and whether it is inverted.
pub type Letter = (usize, bool);

impl FuchsianRep {
    pub fn new(surface: Surface, names: Vec<char>, gens: Vec<Mat2>) -> Result<Self> {
        if names.len() != gens.len() || names.iter().any(|c| !c.is_ascii_uppercase()) {
            return Err(Error::BadParams("generators are named by distinct capital letters".into()));
        }
        for m in &gens {
            Isometry::new(*m)?;
        }
        Ok(FuchsianRep { surface, names, gens })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: RepFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if f.schema != REP_SCHEMA {
            return Err(Error::Parse(format!("expected schema {REP_SCHEMA}, found {}", f.schema)));
        }
        let mut names = Vec::new();
        let mut gens = Vec::new();
        for (k, v) in f.generators {
            let mut it = k.chars();
            let c = match (it.next(), it.next()) {
                (Some(c), None) if c.is_ascii_uppercase() => c,
                _ => return Err(Error::Parse(format!("bad generator name {k:?}"))),
            };
            names.push(c);
            gens.push(Mat2::new(v[0][0], v[0][1], v[1][0], v[1][1]));
        }
        Self::new(f.surface, names, gens)
    }

    pub fn to_json(&self) -> String {
        let generators = self
            .names
            .iter()
            .zip(&self.gens)
            .map(|(c, m)| (c.to_string(), [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]))
            .collect();
        let f = RepFile { schema: REP_SCHEMA.into(), surface: self.surface, generators };
        serde_json::to_string_pretty(&f).expect("rep serializes")
    }

    pub fn parse_word(&self, w: &str) -> Result<Vec<Letter>> {
        w.chars()
            .map(|c| {
                let up = c.to_ascii_uppercase();
                self.names.iter().position(|&n| n == up).map(|i| (i, c.is_ascii_lowercase())).ok_or(Error::UnknownGenerator(c))
            })
            .collect()
    }

    pub fn word_string(&self, w: &[Letter]) -> String {
        w.iter().map(|&(i, inv)| if inv { self.names[i].to_ascii_lowercase() } else { self.names[i] }).collect()
    }

    fn letter(&self, (i, inv): Letter) -> Mat2 {
        if inv { inverse(&self.gens[i]) } else { self.gens[i] }
    }

    pub fn eval_letters(&self, w: &[Letter]) -> Mat2 {
        w.iter().fold(Mat2::identity(), |acc, &l| acc * self.letter(l))
    }

    pub fn eval(&self, w: &str) -> Result<Mat2> {
        Ok(self.eval_letters(&self.parse_word(w)?))
    }

    pub fn relators(&self) -> Vec<String> {
        match self.surface {
            Surface::PuncturedTorus => vec![],
            Surface::Genus2 => vec!["ABabCDcd".into()],
        }
    }

    /// Largest distance of a relator image from ±I.
    pub fn relator_residual(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for r in self.relators() {
            let m = self.eval(&r)?;
            let i = Mat2::identity();
            worst = worst.max((m - i).amax().min((m + i).amax()));
        }
        Ok(worst)
    }

    pub fn commutator_trace(&self) -> Result<f64> {
        Ok(self.eval("ABab")?.trace())
    }
}

fn commutator(a: &Mat2, b: &Mat2) -> Mat2 {
    a * b * inverse(a) * inverse(b)
}

pub fn inverse(m: &Mat2) -> Mat2 {
    Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)])
}

/// Punctured-torus group with `tr A = x`, `tr B = y` and `tr[A, B] = -2`.
pub fn build_punctured_torus(x: f64, y: f64) -> Result<FuchsianRep> {
    if !(x.abs() > 2.0 && y.abs() > 2.0) {
        return Err(Error::NoRealSolution);
    }
    let disc = x * x * y * y - 4.0 * (x * x + y * y);
    if disc < 0.0 {
        return Err(Error::NoRealSolution);
    }
    // x² + y² + z² = xyz, smaller root
    let z = (x * y - disc.sqrt()) / 2.0;
    if z.abs() <= 2.0 {
        return Err(Error::NoRealSolution);
    }
    let s = (z + z.signum() * (z * z - 4.0).sqrt()) / 2.0;
    let a = Mat2::new(x, -1.0, 1.0, 0.0);
    let b = Mat2::new(0.0, s, -1.0 / s, y);
    FuchsianRep::new(Surface::PuncturedTorus, vec!['A', 'B'], vec![a, b])
}

fn diag(l: f64) -> Mat2 {
    Mat2::new(l, 0.0, 0.0, 1.0 / l)
}

/// One-holed torus with `ℓ(A) = l`, `tr[A, B] = kappa`, twisted by `twist` along A.
fn one_holed_torus(l: f64, kappa: f64, twist: f64) -> (Mat2, Mat2) {
    let lam = (l / 2.0).exp();
    let b = (2.0 - kappa).sqrt() / (lam - 1.0 / lam);
    let a = (1.0 + b * b).sqrt();
    let bsym = Mat2::new(a, b, b, a);
    (diag(lam), diag((twist / 2.0).exp()) * bsym)
}

/// Closed genus-2 group from Fenchel-Nielsen data. Pants curves are A, C and the
/// separating curve [A, B]; generators A, B, C, D satisfy [A, B][C, D] = 1.
pub fn build_genus2_fn(lengths: [f64; 3], twists: [f64; 3]) -> Result<FuchsianRep> {
    if lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) || twists.iter().any(|t| !t.is_finite()) {
        return Err(Error::BadParams("pants lengths must be positive and twists finite".into()));
    }
    let kappa = -2.0 * (lengths[2] / 2.0).cosh();
    let (a1, b1) = one_holed_torus(lengths[0], kappa, twists[0]);
    let (a2, b2) = one_holed_torus(lengths[1], kappa, twists[1]);
    // move each separating axis to (0, ∞); z -> -1/z reverses the second one
    let flip = Mat2::new(0.0, -1.0, 1.0, 0.0);
    let n1 = normalizer(&axis(&commutator(&a1, &b1))?);
    let n2 = flip * normalizer(&axis(&commutator(&a2, &b2))?);
    let conj = |n: &Mat2, m: &Mat2| n * m * inverse(n);
    let (a1, b1) = (conj(&n1, &a1), conj(&n1, &b1));
    let (a2, b2) = (conj(&n2, &a2), conj(&n2, &b2));
    // slide each half along the axis so that A's axis sits near i, then twist
    let centre = |a: &Mat2| -> Result<Mat2> {
        let ax = axis(a)?;
        let m = (ax.a.value() * ax.b.value()).abs().sqrt();
        Ok(diag(1.0 / m.sqrt()))
    };
    let s1 = centre(&a1)?;
    let s2 = diag((twists[2] / 2.0).exp()) * centre(&a2)?;
    let (a1, b1) = (conj(&s1, &a1), conj(&s1, &b1));
    let (a2, b2) = (conj(&s2, &a2), conj(&s2, &b2));
    // the two halves must sit on opposite sides of the separating axis
    let side = |m: &Mat2| -> Result<f64> { Ok(axis(m)?.b.value().signum()) };
    if side(&a1)? == side(&a2)? {
        return Err(Error::DegenerateGluing { residual: f64::NAN });
    }
    let rep = FuchsianRep::new(Surface::Genus2, vec!['A', 'B', 'C', 'D'], vec![a1, b1, a2, b2])?;
    let residual = rep.relator_residual()?;
    if residual > 1e-9 {
        return Err(Error::DegenerateGluing { residual });
    }
    Ok(rep)
}

/// Reduced words of length at most `depth`, as (matrix, length, parent, last letter).
struct Ball {
    mats: Vec<Mat2>,
    lens: Vec<usize>,
    parent: Vec<usize>,
    last: Vec<Option<Letter>>,
}

impl Ball {
    fn new(rep: &FuchsianRep, depth: usize) -> Ball {
        let mut ball = Ball { mats: vec![Mat2::identity()], lens: vec![0], parent: vec![0], last: vec![None] };
        let letters: Vec<Letter> = (0..rep.gens.len()).flat_map(|i| [(i, false), (i, true)]).collect();
        let mut frontier = vec![0usize];
        for len in 1..=depth {
            let mut next = Vec::new();
            for &p in &frontier {
                for &l in &letters {
                    if let Some((i, inv)) = ball.last[p] {
                        if i == l.0 && inv != l.1 {
                            continue;
                        }
                    }
                    ball.mats.push(ball.mats[p] * rep.letter(l));
                    ball.lens.push(len);
                    ball.parent.push(p);
                    ball.last.push(Some(l));
                    next.push(ball.mats.len() - 1);
                }
            }
            frontier = next;
        }
        ball
    }

    fn word(&self, mut k: usize) -> Vec<Letter> {
        let mut w = Vec::new();
        while let Some(l) = self.last[k] {
            w.push(l);
            k = self.parent[k];
        }
        w.reverse();
        w
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Crossing {
    pub word: String,
    pub geodesic: Geodesic,
    pub position: f64,
    pub cos: f64,
    pub weight: f64,
    #[serde(skip)]
    min_len: usize,
    #[serde(skip)]
    noise: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossingReport {
    pub crossings: Vec<Crossing>,
    pub period: f64,
    pub depth: usize,
    pub saturated: bool,
}

impl CrossingReport {
    pub fn require_saturated(self) -> Result<Self> {
        if !self.saturated {
            return Err(Error::DepthTooSmall { depth: self.depth });
        }
        Ok(self)
    }

    pub fn cosine_sum(&self, w: f64) -> f64 {
        self.crossings.iter().map(|c| w * c.cos).sum()
    }
}

/// Lifts of δ crossing the axis of γ, one per crossing class modulo ⟨γ⟩.
pub fn enumerate_crossings(rep: &FuchsianRep, gamma: &str, delta: &str, depth: usize) -> Result<CrossingReport> {
    if depth == 0 {
        return Err(Error::DepthTooSmall { depth });
    }
    let g = rep.eval(gamma)?;
    let d = rep.eval(delta)?;
    let ax_g = axis(&g)?;
    let ax_d = axis(&d)?;
    let period = trace_length(&g)?;
    let n = normalizer(&ax_g);
    let base = mobius(&n, C64::new(0.0, 1.0)).norm().ln();
    let ball = Ball::new(rep, depth);
    let g_inv = inverse(&g);
    // powers[j] = g^(-j) for j >= 0, neg[j] = g^j
    let (mut powers, mut neg) = (vec![Mat2::identity()], vec![Mat2::identity()]);
    let crossing_of = |m: &Mat2| -> Option<(Geodesic, f64)> {
        let lift = ax_d.image(m);
        if lift.shares_endpoint(&ax_g) {
            return None;
        }
        let (p, q) = (BoundaryPoint::apply(&n, lift.a).value(), BoundaryPoint::apply(&n, lift.b).value());
        let raw = 0.5 * (-p * q).ln() - base;
        (p * q < 0.0 && raw.is_finite()).then_some((lift, raw))
    };
    let mut found: Vec<Crossing> = Vec::new();
    for (k, m) in ball.mats.iter().enumerate() {
        let Some((_, raw)) = crossing_of(m) else { continue };
        // move the lift within half a period of the base by a power of γ and
        // recompute it there; far translates crowd the axis endpoints and lose precision
        let j = (raw / period).round();
        if j.abs() > (2 * depth + 2) as f64 {
            continue;
        }
        let j = j as i64;
        let shift = if j >= 0 {
            while powers.len() <= j as usize {
                let last = *powers.last().unwrap();
                powers.push(g_inv * last);
            }
            powers[j as usize]
        } else {
            while neg.len() <= (-j) as usize {
                let last = *neg.last().unwrap();
                neg.push(g * last);
            }
            neg[(-j) as usize]
        };
        let full = shift * m;
        let noise = f64::EPSILON * shift.norm() * m.norm() * full.norm();
        if noise > 1e-4 {
            continue;
        }
        let Some((lift, raw)) = crossing_of(&full) else { continue };
        let pos = raw.rem_euclid(period);
        let pos = if period - pos < DEDUP_TOL { 0.0 } else { pos };
        let cos = cos_from(&ax_g, &lift)?;
        // distinct lifts through one point of the axis meet it at distinct angles,
        // so agreement in both position and angle identifies the crossing
        let same = |c: &Crossing| {
            let tol = 1e-6f64.max(100.0 * (c.noise + noise));
            let dpos = (c.position - pos).abs();
            dpos.min(period - dpos) < tol && (c.cos - cos).abs() < tol
        };
        if let Some(c) = found.iter_mut().find(|c| same(c)) {
            c.min_len = c.min_len.min(ball.lens[k]);
            if noise < c.noise {
                c.noise = noise;
                c.geodesic = lift;
                c.position = pos;
                c.cos = cos;
                c.word = rep.word_string(&ball.word(k));
            }
            continue;
        }
        found.push(Crossing {
            word: rep.word_string(&ball.word(k)),
            geodesic: lift,
            position: pos,
            cos,
            weight: 1.0,
            min_len: ball.lens[k],
            noise,
        });
    }
    found.sort_by(|a, b| a.position.total_cmp(&b.position));
    let saturated = found.iter().all(|c| c.min_len < depth);
    Ok(CrossingReport { crossings: found, period, depth, saturated })
}

pub fn cosine_sum(rep: &FuchsianRep, gamma: &str, delta: &str, w: f64, depth: usize) -> Result<f64> {
    Ok(enumerate_crossings(rep, gamma, delta, depth)?.cosine_sum(w))
}

/// Weighted double sum of cosine sums over component pairs.
pub fn multicurve_bracket(rep: &FuchsianRep, gamma: &[(String, f64)], delta: &[(String, f64)], depth: usize) -> Result<f64> {
    let mut s = 0.0;
    for (g, wg) in gamma {
        for (d, wd) in delta {
            s += wg * cosine_sum(rep, g, d, *wd, depth)?;
        }
    }
    Ok(s)
}

/// Translations to apply ahead of each generator image, fixed by δ and the base point.
#[derive(Clone, Debug)]
pub struct TwistPlan {
    rep: FuchsianRep,
    weight: f64,
    /// Per generator: normalizers of the separating lifts, ordered from the
    /// base point, with the sign of the translation along (0, ∞).
    lifts: Vec<Vec<(Mat2, f64)>>,
}

impl TwistPlan {
    pub fn new(rep: &FuchsianRep, delta: &str, weight: f64, depth: usize) -> Result<Self> {
        let d = rep.eval(delta)?;
        let ax_d = axis(&d)?;
        let o = base_point();
        let ball = Ball::new(rep, depth);
        let lifts: Vec<Geodesic> = ball.mats.iter().map(|m| ax_d.image(m)).collect();
        // a lift crossing the axis itself means δ crosses itself
        for (lift, m) in lifts.iter().zip(&ball.mats) {
            let near = [lift.a, lift.b].iter().any(|p| p.same(ax_d.a, 1e-8) || p.same(ax_d.b, 1e-8));
            if f64::EPSILON * m.norm_squared() < 1e-8 && !near && interlaced(&ax_d, lift)? {
                return Err(Error::NotSimple);
            }
        }
        let mut plan = Vec::new();
        for gen in &rep.gens {
            let xo = mobius(gen, o);
            let mut sep: Vec<(Geodesic, f64, f64)> = Vec::new();
            for (lift, m) in lifts.iter().zip(&ball.mats) {
                if f64::EPSILON * m.norm_squared() > 1e-8 || lift.a.same(lift.b, ENDPOINT_TOL) {
                    continue;
                }
                let n = normalizer(lift);
                let (zo, zx) = (mobius(&n, o), mobius(&n, xo));
                if zo.re * zx.re >= 0.0 || sep.iter().any(|(g, _, _)| g.same_as(lift, DEDUP_TOL)) {
                    continue;
                }
                let dist = (zo.re.abs() / zo.im).asinh();
                // walker crosses from the base point's side; translate toward its right
                let sign = if zo.re < 0.0 { -1.0 } else { 1.0 };
                sep.push((*lift, dist, sign));
            }
            for i in 0..sep.len() {
                for j in i + 1..sep.len() {
                    if interlaced(&sep[i].0, &sep[j].0).unwrap_or(false) {
                        return Err(Error::NotSimple);
                    }
                }
            }
            sep.sort_by(|a, b| a.1.total_cmp(&b.1));
            plan.push(sep.into_iter().map(|(g, _, s)| (normalizer(&g), s)).collect());
        }
        Ok(TwistPlan { rep: rep.clone(), weight, lifts: plan })
    }

    pub fn crossings_per_generator(&self) -> Vec<usize> {
        self.lifts.iter().map(|l| l.len()).collect()
    }

    pub fn at(&self, t: f64) -> FuchsianRep {
        if t == 0.0 {
            return self.rep.clone();
        }
        let s = t * self.weight;
        let gens = self
            .rep
            .gens
            .iter()
            .zip(&self.lifts)
            .map(|(m, lifts)| {
                let e = lifts.iter().fold(Mat2::identity(), |acc, (n, sign)| {
                    acc * inverse(n) * diag((sign * s / 2.0).exp()) * n
                });
                e * m
            })
            .collect();
        FuchsianRep { surface: self.rep.surface, names: self.rep.names.clone(), gens }
    }
}

pub fn twist_deform(rep: &FuchsianRep, delta: &str, w: f64, t: f64, depth: usize) -> Result<FuchsianRep> {
    Ok(TwistPlan::new(rep, delta, w, depth)?.at(t))
}

/// Central differences from step `h`, two Richardson levels; returns (value, error estimate).
pub fn richardson(f: impl Fn(f64) -> Result<f64>, h: f64) -> Result<(f64, f64)> {
    let d = |h: f64| -> Result<f64> { Ok((f(h)? - f(-h)?) / (2.0 * h)) };
    let (d1, d2, d3) = (d(h)?, d(h / 2.0)?, d(h / 4.0)?);
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d3 - d2) / 3.0;
    let best = (16.0 * r2 - r1) / 15.0;
    Ok((best, (best - r2).abs()))
}

/// Derivative of ℓ_γ under twisting along δ with weight `w`, by finite differences.
pub fn dlength_dtwist(rep: &FuchsianRep, gamma: &str, delta: &str, w: f64, depth: usize) -> Result<(f64, f64)> {
    let plan = TwistPlan::new(rep, delta, w, depth)?;
    let word = rep.parse_word(gamma)?;
    richardson(|t| trace_length(&plan.at(t).eval_letters(&word)), FD_STEP)
}

/// The γ and elementary-shear matrices of the trace computation, normalized so
/// g₂ = (0, ∞), g₁ = (1, ∞) and γ runs from a < 0 to b > 0.
pub fn normalized_gamma(a: f64, b: f64, l: f64) -> Mat2 {
    let (ep, em) = ((l / 2.0).exp(), (-l / 2.0).exp());
    Mat2::new(b * ep - a * em, a * b * (em - ep), ep - em, b * em - a * ep) / (b - a)
}

pub fn elementary_shear(alpha: f64) -> Mat2 {
    let (h, hi) = ((alpha / 2.0).exp(), (-alpha / 2.0).exp());
    diag(h) * Mat2::new(1.0, 1.0, 0.0, 1.0) * Mat2::new(hi, 0.0, 0.0, h) * Mat2::new(1.0, -1.0, 0.0, 1.0)
}

/// Stated closed form `-α sinh(ℓ/2)/(a - b)` for dτ/dt against a finite
/// difference of `tr(E(tα) γ)`.
pub fn dtau_dshear_check(a: f64, b: f64, l: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(a < 0.0 && b > 0.0 && l > 0.0) || !alpha.is_finite() {
        return Err(Error::BadConfiguration(format!("need a < 0 < b and ℓ > 0, got a={a}, b={b}, ℓ={l}")));
    }
    let analytic = -alpha * (l / 2.0).sinh() / (a - b);
    let gamma = normalized_gamma(a, b, l);
    let (numeric, _) = richardson(|t| Ok((elementary_shear(t * alpha) * gamma).trace().abs()), FD_STEP)?;
    Ok((analytic, numeric))
}

/// The derivative of the elementary shear matrices in closed form, `-2α sinh(ℓ/2)/(a - b)`.
pub fn dtau_dshear_exact(a: f64, b: f64, l: f64, alpha: f64) -> f64 {
    -2.0 * alpha * (l / 2.0).sinh() / (a - b)
}
