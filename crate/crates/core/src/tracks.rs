//! Trivalent train tracks: switch conditions, weight spaces, the Thurston form,
//! carrying maps and the ω-induced duality.
//!
//! A switch stores three half-branch slots. Walking into the switch along the
//! large half-branch, `small_left` leaves to the walker's left and `small_right`
//! to the right. Counterclockwise the cyclic order at a switch is
//! (large, small_right, small_left), and the cusp sits between the two small slots.

use crate::error::{Error, Result};
use crate::linalg;
use crate::rational::{parse_q, q, q_frac, Q, QMat};
use nalgebra::{DMatrix, DVector};
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

pub const TRACK_SCHEMA: &str = "track/1";
pub const WEIGHTS_SCHEMA: &str = "weights/1";
pub const INCIDENCE_SCHEMA: &str = "incidence/1";

/// A half-branch: branch id and end (0 or 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Slot(pub usize, pub u8);

impl Slot {
    pub fn branch(self) -> usize {
        self.0
    }
    pub fn end(self) -> u8 {
        self.1
    }
    pub fn other_end(self) -> Slot {
        Slot(self.0, 1 - self.1.min(1))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Switch {
    pub id: usize,
    pub large: Slot,
    pub small_left: Slot,
    pub small_right: Slot,
}

impl Switch {
    pub fn slots(&self) -> [Slot; 3] {
        [self.large, self.small_left, self.small_right]
    }

    /// Counterclockwise successor of a slot at this switch.
    fn ccw_next(&self, s: Slot) -> Slot {
        if s == self.large {
            self.small_right
        } else if s == self.small_right {
            self.small_left
        } else {
            self.large
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainTrack {
    pub genus: usize,
    pub branches: Vec<Branch>,
    pub switches: Vec<Switch>,
}

#[derive(Serialize, Deserialize)]
struct TrackFile {
    schema: String,
    genus: usize,
    branches: Vec<Branch>,
    switches: Vec<Switch>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Empty,
    DuplicateBranchId(usize),
    DuplicateSwitchId(usize),
    BadEnd { switch: usize, end: u8 },
    DanglingHalfBranch { branch: usize, end: u8 },
    DuplicateSlot { branch: usize, end: u8 },
    SameSwitchBothEnds { branch: usize, switch: usize },
    Disconnected,
    GenusMismatch { declared: usize, euler: i64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "track has no branches"),
            Violation::DuplicateBranchId(b) => write!(f, "duplicate branch id {b}"),
            Violation::DuplicateSwitchId(s) => write!(f, "duplicate switch id {s}"),
            Violation::BadEnd { switch, end } => write!(f, "switch {switch} uses end {end}, expected 0 or 1"),
            Violation::DanglingHalfBranch { branch, end } => {
                write!(f, "dangling half-branch ({branch}, {end})")
            }
            Violation::DuplicateSlot { branch, end } => {
                write!(f, "half-branch ({branch}, {end}) attached to more than one switch slot")
            }
            Violation::SameSwitchBothEnds { branch, switch } => {
                write!(f, "branch {branch} has both ends at switch {switch}")
            }
            Violation::Disconnected => write!(f, "track is disconnected"),
            Violation::GenusMismatch { declared, euler } => {
                write!(f, "declared genus {declared} but Euler characteristic is {euler}")
            }
        }
    }
}

impl Violation {
    pub fn name(&self) -> &'static str {
        match self {
            Violation::Empty => "empty",
            Violation::DuplicateBranchId(_) => "duplicate-branch-id",
            Violation::DuplicateSwitchId(_) => "duplicate-switch-id",
            Violation::BadEnd { .. } => "bad-end",
            Violation::DanglingHalfBranch { .. } => "dangling-half-branch",
            Violation::DuplicateSlot { .. } => "duplicate-slot",
            Violation::SameSwitchBothEnds { .. } => "same-switch-both-ends",
            Violation::Disconnected => "disconnected",
            Violation::GenusMismatch { .. } => "genus-mismatch",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub violation: Option<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// A complementary region traced along the ribbon structure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Face {
    /// Half-branches in traversal order; each is left through its slot's end.
    pub sides: Vec<Slot>,
    pub cusps: usize,
}

#[derive(Clone, Debug)]
pub struct TrackInfo {
    pub branches: usize,
    pub switches: usize,
    pub faces: Vec<Face>,
    pub euler_characteristic: i64,
    pub maximal: bool,
}

impl TrainTrack {
    pub fn from_json(s: &str) -> Result<Self> {
        let f: TrackFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if f.schema != TRACK_SCHEMA {
            return Err(Error::Parse(format!("expected schema {TRACK_SCHEMA}, found {}", f.schema)));
        }
        Ok(TrainTrack { genus: f.genus, branches: f.branches, switches: f.switches })
    }

    pub fn to_json(&self) -> String {
        let f = TrackFile {
            schema: TRACK_SCHEMA.into(),
            genus: self.genus,
            branches: self.branches.clone(),
            switches: self.switches.clone(),
        };
        serde_json::to_string_pretty(&f).expect("track serializes")
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    fn branch_index(&self) -> HashMap<usize, usize> {
        self.branches.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    /// Position of a branch id in `branches`. Panics on unknown ids; call on validated tracks.
    pub fn index_of(&self, branch: usize) -> usize {
        self.branches.iter().position(|b| b.id == branch).expect("branch id present")
    }

    fn slot_owner(&self) -> HashMap<Slot, usize> {
        let mut m = HashMap::new();
        for (k, s) in self.switches.iter().enumerate() {
            for sl in s.slots() {
                m.insert(sl, k);
            }
        }
        m
    }

    /// Trace the complementary regions. Requires a validated track.
    pub fn faces(&self) -> Vec<Face> {
        let owner = self.slot_owner();
        let mut seen: HashSet<Slot> = HashSet::new();
        let mut faces = Vec::new();
        let mut darts: Vec<Slot> = owner.keys().cloned().collect();
        darts.sort();
        for start in darts {
            if seen.contains(&start) {
                continue;
            }
            let mut sides = Vec::new();
            let mut cusps = 0;
            let mut d = start;
            loop {
                seen.insert(d);
                sides.push(d);
                let arrive = d.other_end();
                let sw = &self.switches[owner[&arrive]];
                if arrive == sw.small_right {
                    cusps += 1;
                }
                d = sw.ccw_next(arrive);
                if d == start {
                    break;
                }
            }
            faces.push(Face { sides, cusps });
        }
        faces
    }

    pub fn info(&self) -> TrackInfo {
        let faces = self.faces();
        let v = self.switches.len() as i64;
        let e = self.branches.len() as i64;
        let chi = v - e + faces.len() as i64;
        let maximal = !faces.is_empty() && faces.iter().all(|f| f.cusps == 3);
        TrackInfo {
            branches: self.branches.len(),
            switches: self.switches.len(),
            faces,
            euler_characteristic: chi,
            maximal,
        }
    }

    /// Switch-condition matrix, one row per switch: w(large) - w(left) - w(right).
    pub fn switch_matrix(&self) -> QMat {
        let idx = self.branch_index();
        let mut m = QMat::zeros(self.switches.len(), self.branches.len());
        for (r, s) in self.switches.iter().enumerate() {
            m[(r, idx[&s.large.0])] += q(1);
            m[(r, idx[&s.small_left.0])] -= q(1);
            m[(r, idx[&s.small_right.0])] -= q(1);
        }
        m
    }

    pub fn check_switches(&self, w: &[Q]) -> Result<()> {
        if w.len() != self.branches.len() {
            return Err(Error::ShapeMismatch { expected: self.branches.len(), found: w.len() });
        }
        let idx = self.branch_index();
        for s in &self.switches {
            let lhs = &w[idx[&s.large.0]];
            let rhs = &w[idx[&s.small_left.0]] + &w[idx[&s.small_right.0]];
            if *lhs != rhs {
                return Err(Error::SwitchViolation { switch: s.id });
            }
        }
        Ok(())
    }

    pub fn switch_residual(&self, w: &[f64]) -> f64 {
        let idx = self.branch_index();
        self.switches
            .iter()
            .map(|s| (w[idx[&s.large.0]] - w[idx[&s.small_left.0]] - w[idx[&s.small_right.0]]).abs())
            .fold(0.0, f64::max)
    }
}

pub fn validate_track(t: &TrainTrack) -> ValidationReport {
    ValidationReport { violation: first_violation(t) }
}

fn first_violation(t: &TrainTrack) -> Option<Violation> {
    if t.branches.is_empty() {
        return Some(Violation::Empty);
    }
    let mut ids = HashSet::new();
    for b in &t.branches {
        if !ids.insert(b.id) {
            return Some(Violation::DuplicateBranchId(b.id));
        }
    }
    let mut sids = HashSet::new();
    for s in &t.switches {
        if !sids.insert(s.id) {
            return Some(Violation::DuplicateSwitchId(s.id));
        }
    }
    let mut attached: HashMap<Slot, usize> = HashMap::new();
    for s in &t.switches {
        for sl in s.slots() {
            if sl.1 > 1 {
                return Some(Violation::BadEnd { switch: s.id, end: sl.1 });
            }
            if !ids.contains(&sl.0) {
                return Some(Violation::DanglingHalfBranch { branch: sl.0, end: sl.1 });
            }
            if attached.insert(sl, s.id).is_some() {
                return Some(Violation::DuplicateSlot { branch: sl.0, end: sl.1 });
            }
        }
    }
    for b in &t.branches {
        for e in 0..2u8 {
            if !attached.contains_key(&Slot(b.id, e)) {
                return Some(Violation::DanglingHalfBranch { branch: b.id, end: e });
            }
        }
        let (s0, s1) = (attached[&Slot(b.id, 0)], attached[&Slot(b.id, 1)]);
        if s0 == s1 {
            return Some(Violation::SameSwitchBothEnds { branch: b.id, switch: s0 });
        }
    }
    // connectivity over switches
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for b in &t.branches {
        let (s0, s1) = (attached[&Slot(b.id, 0)], attached[&Slot(b.id, 1)]);
        adj.entry(s0).or_default().push(s1);
        adj.entry(s1).or_default().push(s0);
    }
    let start = t.switches[0].id;
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        for &n in adj.get(&s).into_iter().flatten() {
            if seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    if seen.len() != t.switches.len() {
        return Some(Violation::Disconnected);
    }
    let chi = t.info().euler_characteristic;
    if chi != 2 - 2 * t.genus as i64 {
        return Some(Violation::GenusMismatch { declared: t.genus, euler: chi });
    }
    None
}

fn require_valid(t: &TrainTrack) -> Result<()> {
    match first_violation(t) {
        None => Ok(()),
        Some(v) => Err(Error::InvalidTrack(v.to_string())),
    }
}

/// Rational weight vector indexed like `TrainTrack::branches`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightVector {
    pub values: Vec<Q>,
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    schema: String,
    track: String,
    values: Vec<String>,
}

impl WeightVector {
    pub fn new(values: Vec<Q>) -> Self {
        WeightVector { values }
    }

    pub fn zeros(n: usize) -> Self {
        WeightVector { values: vec![Q::zero(); n] }
    }

    pub fn to_f64(&self) -> DVector<f64> {
        DVector::from_iterator(self.values.len(), self.values.iter().map(crate::rational::q_to_f64))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|x| !x.is_negative())
    }

    pub fn from_json(s: &str) -> Result<(String, Self)> {
        let f: WeightsFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if f.schema != WEIGHTS_SCHEMA {
            return Err(Error::Parse(format!("expected schema {WEIGHTS_SCHEMA}, found {}", f.schema)));
        }
        let values = f
            .values
            .iter()
            .map(|v| parse_q(v).ok_or_else(|| Error::Parse(format!("bad rational '{v}'"))))
            .collect::<Result<Vec<_>>>()?;
        Ok((f.track, WeightVector { values }))
    }

    pub fn to_json(&self, track: &str) -> String {
        let f = WeightsFile {
            schema: WEIGHTS_SCHEMA.into(),
            track: track.into(),
            values: self.values.iter().map(|v| v.to_string()).collect(),
        };
        serde_json::to_string_pretty(&f).expect("weights serialize")
    }
}

/// Kernel of the switch system. Columns of `basis` are weight vectors; the rows
/// listed in `free` form an identity block, so coordinates are read off there.
#[derive(Clone, Debug)]
pub struct WeightSpace {
    pub basis: QMat,
    pub free: Vec<usize>,
}

impl WeightSpace {
    pub fn dimension(&self) -> usize {
        self.basis.ncols()
    }

    pub fn vectors(&self) -> Vec<WeightVector> {
        (0..self.dimension()).map(|j| WeightVector::new(self.basis.column(j))).collect()
    }

    pub fn coords(&self, w: &WeightVector) -> Vec<Q> {
        self.free.iter().map(|&i| w.values[i].clone()).collect()
    }

    pub fn vector(&self, coords: &[Q]) -> WeightVector {
        WeightVector::new(self.basis.mul_vec(coords))
    }

    pub fn coords_f64(&self, w: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| w[i]))
    }

    pub fn basis_f64(&self) -> DMatrix<f64> {
        self.basis.to_f64()
    }
}

pub fn weight_space(t: &TrainTrack) -> Result<WeightSpace> {
    require_valid(t)?;
    let m = t.switch_matrix();
    let basis = m.kernel();
    let mut r = m.clone();
    let pivots = r.rref();
    let free = (0..m.ncols()).filter(|c| !pivots.contains(c)).collect();
    Ok(WeightSpace { basis, free })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticSpace {
    pub form: DMatrix<f64>,
}

impl SymplecticSpace {
    pub fn new(form: DMatrix<f64>) -> Result<Self> {
        let n = form.nrows();
        if form.ncols() != n {
            return Err(Error::ShapeMismatch { expected: n, found: form.ncols() });
        }
        if linalg::max_abs(&(form.transpose() + &form)) > 1e-12 * linalg::max_abs(&form).max(1.0) {
            return Err(Error::BadParams("form is not antisymmetric".into()));
        }
        Ok(SymplecticSpace { form })
    }

    pub fn standard(n: usize) -> Self {
        SymplecticSpace { form: linalg::std_form(n) }
    }

    pub fn dimension(&self) -> usize {
        self.form.nrows()
    }

    pub fn omega(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        linalg::form(&self.form, u, v)
    }

    pub fn is_nondegenerate(&self) -> bool {
        let n = self.dimension();
        if n == 0 || n % 2 == 1 {
            return false;
        }
        let sv = self.form.clone().svd(false, false).singular_values;
        let max = sv.max();
        sv.min() > 1e-12 * max.max(1.0)
    }
}

#[derive(Clone, Debug)]
pub struct ThurstonForm {
    pub exact: QMat,
    pub space: SymplecticSpace,
    pub degenerate: bool,
}

/// Matrix of ω(α, β) = ½ Σ_s (α(r_s) β(ℓ_s) - β(r_s) α(ℓ_s)) in the given basis (columns).
pub fn thurston_form(t: &TrainTrack, basis: &QMat) -> Result<ThurstonForm> {
    require_valid(t)?;
    if basis.nrows() != t.num_branches() {
        return Err(Error::ShapeMismatch { expected: t.num_branches(), found: basis.nrows() });
    }
    let d = basis.ncols();
    let idx = t.branch_index();
    let mut om = QMat::zeros(d, d);
    let half = q_frac(1, 2);
    for s in &t.switches {
        let r = basis.row(idx[&s.small_right.0]);
        let l = basis.row(idx[&s.small_left.0]);
        for i in 0..d {
            for j in 0..d {
                let v = &r[i] * &l[j] - &r[j] * &l[i];
                if !v.is_zero() {
                    om[(i, j)] += v * &half;
                }
            }
        }
    }
    let degenerate = d == 0 || om.determinant().is_zero();
    let space = SymplecticSpace { form: om.to_f64() };
    Ok(ThurstonForm { exact: om, space, degenerate })
}

/// ω evaluated directly on two branch-weight vectors.
pub fn thurston_pairing(t: &TrainTrack, a: &[Q], b: &[Q]) -> Q {
    let idx = t.branch_index();
    let mut s = Q::zero();
    for sw in &t.switches {
        let (r, l) = (idx[&sw.small_right.0], idx[&sw.small_left.0]);
        s += &a[r] * &b[l] - &b[r] * &a[l];
    }
    s * q_frac(1, 2)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncidenceMatrix {
    pub source: String,
    pub target: String,
    pub matrix: Vec<Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct IncidenceFile {
    schema: String,
    source: String,
    target: String,
    matrix: Vec<Vec<u64>>,
}

impl IncidenceMatrix {
    pub fn from_json(s: &str) -> Result<Self> {
        let f: IncidenceFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if f.schema != INCIDENCE_SCHEMA {
            return Err(Error::Parse(format!("expected schema {INCIDENCE_SCHEMA}, found {}", f.schema)));
        }
        let n = f.matrix.first().map_or(0, |r| r.len());
        if f.matrix.iter().any(|r| r.len() != n) {
            return Err(Error::Parse("ragged incidence matrix".into()));
        }
        Ok(IncidenceMatrix { source: f.source, target: f.target, matrix: f.matrix })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&IncidenceFile {
            schema: INCIDENCE_SCHEMA.into(),
            source: self.source.clone(),
            target: self.target.clone(),
            matrix: self.matrix.clone(),
        })
        .expect("incidence serializes")
    }

    pub fn identity(n: usize, track: &str) -> Self {
        let matrix = (0..n).map(|i| (0..n).map(|j| u64::from(i == j)).collect()).collect();
        IncidenceMatrix { source: track.into(), target: track.into(), matrix }
    }

    pub fn nrows(&self) -> usize {
        self.matrix.len()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.first().map_or(0, |r| r.len())
    }

    pub fn to_qmat(&self) -> QMat {
        QMat::from_fn(self.nrows(), self.ncols(), |i, j| q(self.matrix[i][j] as i64))
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows(), self.ncols(), |i, j| self.matrix[i][j] as f64)
    }
}

pub fn apply_carrying(
    m: &IncidenceMatrix,
    source: &TrainTrack,
    target: &TrainTrack,
    w: &WeightVector,
) -> Result<WeightVector> {
    if m.ncols() != source.num_branches() {
        return Err(Error::ShapeMismatch { expected: source.num_branches(), found: m.ncols() });
    }
    if m.nrows() != target.num_branches() {
        return Err(Error::ShapeMismatch { expected: target.num_branches(), found: m.nrows() });
    }
    source.check_switches(&w.values)?;
    let out = WeightVector::new(m.to_qmat().mul_vec(&w.values));
    target.check_switches(&out.values)?;
    Ok(out)
}

/// Matrix of the carrying map on weight-space coordinates: `M K_src = K_tgt B`.
pub fn restrict_to_weights(m: &IncidenceMatrix, src: &WeightSpace, tgt: &WeightSpace) -> Result<QMat> {
    if m.ncols() != src.basis.nrows() {
        return Err(Error::ShapeMismatch { expected: src.basis.nrows(), found: m.ncols() });
    }
    if m.nrows() != tgt.basis.nrows() {
        return Err(Error::ShapeMismatch { expected: tgt.basis.nrows(), found: m.nrows() });
    }
    let mk = m.to_qmat().mul(&src.basis);
    let b = QMat::from_fn(tgt.free.len(), mk.ncols(), |i, j| mk[(tgt.free[i], j)].clone());
    let back = tgt.basis.mul(&b);
    if back != mk {
        let col = (0..mk.ncols()).find(|&j| back.column(j) != mk.column(j)).unwrap_or(0);
        return Err(Error::BadParams(format!(
            "incidence does not carry weight-space basis vector {col} into the target weight space"
        )));
    }
    Ok(b)
}

/// The vector ∗v with ω(w, ∗v) = ⟨w, v⟩ for all w, i.e. Ω ∗v = v.
pub fn duality_star(space: &SymplecticSpace, covector: &DVector<f64>) -> Result<DVector<f64>> {
    let n = space.dimension();
    if covector.len() != n {
        return Err(Error::ShapeMismatch { expected: n, found: covector.len() });
    }
    if !space.is_nondegenerate() {
        return Err(Error::DegenerateForm);
    }
    space.form.clone().lu().solve(covector).ok_or(Error::DegenerateForm)
}

/// Matrix of ∗, namely Ω⁻¹.
pub fn star_matrix(space: &SymplecticSpace) -> Result<DMatrix<f64>> {
    if !space.is_nondegenerate() {
        return Err(Error::DegenerateForm);
    }
    space.form.clone().try_inverse().ok_or(Error::DegenerateForm)
}

pub fn duality_star_exact(form: &QMat, covector: &[Q]) -> Result<Vec<Q>> {
    if covector.len() != form.nrows() {
        return Err(Error::ShapeMismatch { expected: form.nrows(), found: covector.len() });
    }
    let inv = form.inverse().ok_or(Error::DegenerateForm)?;
    Ok(inv.mul_vec(covector))
}

/// Action on covectors induced by B (pull back along B): v ↦ Bᵀ v.
pub fn dual_action(b: &DMatrix<f64>) -> DMatrix<f64> {
    b.transpose()
}

/// `max |∗ B' - B⁻¹ ∗|` with B' the dual action.
pub fn conjugation_residual(space: &SymplecticSpace, b: &DMatrix<f64>) -> Result<f64> {
    let star = star_matrix(space)?;
    let binv = b.clone().try_inverse().ok_or(Error::NotSymplectic { residual: f64::INFINITY })?;
    Ok(linalg::max_abs(&(&star * dual_action(b) - binv * &star)))
}

/// Exact version of the conjugation identity; true when ∗ Bᵀ = B⁻¹ ∗ holds on the nose.
pub fn conjugation_identity_exact(form: &QMat, b: &QMat) -> Result<bool> {
    let star = form.inverse().ok_or(Error::DegenerateForm)?;
    let binv = b.inverse().ok_or(Error::NotSymplectic { residual: f64::INFINITY })?;
    Ok(star.mul(&b.transpose()) == binv.mul(&star))
}

/// Cyclic cover of a track along a nonseparating dual cycle.
///
/// Covering a genus-2 maximal track `g - 1` times gives a maximal track of genus `g`.
pub fn cyclic_cover(base: &TrainTrack, degree: usize) -> Result<TrainTrack> {
    require_valid(base)?;
    if degree == 0 {
        return Err(Error::BadParams("cover degree must be positive".into()));
    }
    let voltage = dual_cycle_voltage(base);
    let n = degree as i64;
    let nb = base.branches.len();
    let lift_branch = |b: usize, sheet: i64| -> usize {
        let i = base.index_of(b);
        sheet.rem_euclid(n) as usize * nb + i
    };
    let mut branches = Vec::with_capacity(nb * degree);
    for sheet in 0..degree {
        for i in 0..nb {
            branches.push(Branch { id: sheet * nb + i });
        }
    }
    let ns = base.switches.len();
    let mut switches = Vec::with_capacity(ns * degree);
    for sheet in 0..degree as i64 {
        for (k, s) in base.switches.iter().enumerate() {
            let lift = |sl: Slot| -> Slot {
                let v = voltage[&sl.0];
                let b = if sl.1 == 0 { lift_branch(sl.0, sheet) } else { lift_branch(sl.0, sheet - v) };
                Slot(b, sl.1)
            };
            switches.push(Switch {
                id: sheet as usize * ns + k,
                large: lift(s.large),
                small_left: lift(s.small_left),
                small_right: lift(s.small_right),
            });
        }
    }
    let genus = (degree * (2 * base.genus - 2) + 2) / 2;
    let cover = TrainTrack { genus, branches, switches };
    require_valid(&cover)?;
    Ok(cover)
}

/// Signed crossings of each branch with a nonseparating cycle in the dual graph,
/// found from a tree-cotree decomposition.
fn dual_cycle_voltage(t: &TrainTrack) -> BTreeMap<usize, i64> {
    let owner = t.slot_owner();
    let faces = t.faces();
    let mut face_of: HashMap<Slot, usize> = HashMap::new();
    for (f, face) in faces.iter().enumerate() {
        for &d in &face.sides {
            face_of.insert(d, f);
        }
    }
    // primal spanning tree over switches
    let mut in_tree: HashSet<usize> = HashSet::new();
    let mut seen = HashSet::from([0usize]);
    let mut queue = VecDeque::from([0usize]);
    while let Some(k) = queue.pop_front() {
        for sl in t.switches[k].slots() {
            let other = owner[&sl.other_end()];
            if seen.insert(other) {
                in_tree.insert(sl.0);
                queue.push_back(other);
            }
        }
    }
    // dual spanning tree over faces, avoiding primal tree branches
    let mut parent: HashMap<usize, (usize, usize)> = HashMap::new();
    let mut in_cotree: HashSet<usize> = HashSet::new();
    let mut fseen = HashSet::from([0usize]);
    let mut fqueue = VecDeque::from([0usize]);
    while let Some(f) = fqueue.pop_front() {
        for b in &t.branches {
            if in_tree.contains(&b.id) || in_cotree.contains(&b.id) {
                continue;
            }
            let (f0, f1) = (face_of[&Slot(b.id, 0)], face_of[&Slot(b.id, 1)]);
            let other = if f0 == f {
                f1
            } else if f1 == f {
                f0
            } else {
                continue;
            };
            if fseen.insert(other) {
                in_cotree.insert(b.id);
                parent.insert(other, (f, b.id));
                fqueue.push_back(other);
            }
        }
    }
    let leftover = t
        .branches
        .iter()
        .map(|b| b.id)
        .find(|b| !in_tree.contains(b) && !in_cotree.contains(b))
        .expect("a surface of positive genus has leftover edges");
    let mut voltage: BTreeMap<usize, i64> = t.branches.iter().map(|b| (b.id, 0)).collect();
    let cross = |voltage: &mut BTreeMap<usize, i64>, from: usize, b: usize| {
        let f0 = face_of[&Slot(b, 0)];
        *voltage.get_mut(&b).unwrap() += if from == f0 { 1 } else { -1 };
    };
    // cross the leftover edge, then walk back through the cotree
    let (fa, fb) = (face_of[&Slot(leftover, 0)], face_of[&Slot(leftover, 1)]);
    cross(&mut voltage, fa, leftover);
    let path_to_root = |mut f: usize| {
        let mut p = Vec::new();
        while let Some(&(up, b)) = parent.get(&f) {
            p.push((f, up, b));
            f = up;
        }
        p
    };
    for (f, _, b) in path_to_root(fb) {
        cross(&mut voltage, f, b);
    }
    for (f, up, b) in path_to_root(fa).into_iter().rev() {
        let _ = f;
        cross(&mut voltage, up, b);
    }
    voltage
}
