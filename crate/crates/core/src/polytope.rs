//! Convex polytopes in H-representation over the perturbation-parameter space,
//! and the linear programs asked of them.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpOutcome};
use crate::nn::NeuronId;
use crate::scalar::{dot, norm2, Scalar};

/// Where a half-space came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RowLabel {
    Neuron(NeuronId),
    /// `-θ_i ≤ -lo_i`
    BoxLower(usize),
    /// `θ_i ≤ hi_i`
    BoxUpper(usize),
}

impl RowLabel {
    pub fn is_box(&self) -> bool {
        !matches!(self, RowLabel::Neuron(_))
    }

    pub fn neuron(&self) -> Option<NeuronId> {
        match self {
            RowLabel::Neuron(id) => Some(*id),
            _ => None,
        }
    }
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowLabel::Neuron(id) => write!(f, "h{id}"),
            RowLabel::BoxLower(i) => write!(f, "lo{i}"),
            RowLabel::BoxUpper(i) => write!(f, "hi{i}"),
        }
    }
}

impl FromStr for RowLabel {
    type Err = Error;

    /// Inverse of `Display`: `h(l,n)`, `lo<i>` or `hi<i>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("bad row label `{s}`"));
        if let Some(rest) = s.strip_prefix("h(").and_then(|r| r.strip_suffix(')')) {
            let (l, n) = rest.split_once(',').ok_or_else(bad)?;
            let l = l.parse().map_err(|_| bad())?;
            let n = n.parse().map_err(|_| bad())?;
            return Ok(RowLabel::Neuron(NeuronId::new(l, n)));
        }
        if let Some(i) = s.strip_prefix("lo") {
            return i.parse().map(RowLabel::BoxLower).map_err(|_| bad());
        }
        if let Some(i) = s.strip_prefix("hi") {
            return i.parse().map(RowLabel::BoxUpper).map_err(|_| bad());
        }
        Err(bad())
    }
}

/// Labels of the rows confirmed to be facets of a polytope.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaceSet(BTreeSet<RowLabel>);

impl FaceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: RowLabel) -> bool {
        self.0.insert(label)
    }

    pub fn contains(&self, label: &RowLabel) -> bool {
        self.0.contains(label)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RowLabel> {
        self.0.iter()
    }
}

impl FromIterator<RowLabel> for FaceSet {
    fn from_iter<I: IntoIterator<Item = RowLabel>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Axis-aligned parameter box `Θ = [lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBox<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Scalar> ThetaBox<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidConfig(
                "parameter box needs matching, nonempty bounds".into(),
            ));
        }
        if lo.iter().zip(&hi).any(|(&l, &h)| !(l <= h)) {
            return Err(Error::InvalidConfig("parameter box interval is empty".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> &[T] {
        &self.hi
    }

    pub fn contains(&self, theta: &[T]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&t, (&l, &h))| l <= t && t <= h)
    }

    pub fn center(&self) -> Vec<T> {
        let two = T::lit(2.0);
        self.lo.iter().zip(&self.hi).map(|(&l, &h)| (l + h) / two).collect()
    }

    /// All `2^dim` corners; bit `i` of the index selects `hi_i`.
    pub fn vertices(&self) -> Vec<Vec<T>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] })
                    .collect()
            })
            .collect()
    }

    /// Corner farthest from the origin (first one on ties).
    pub fn farthest_corner(&self) -> Vec<T> {
        let mut best = self.hi.clone();
        let mut best_norm = norm2(&best);
        for v in self.vertices() {
            let nv = norm2(&v);
            if nv > best_norm {
                best_norm = nv;
                best = v;
            }
        }
        best
    }

    pub fn to_polytope(&self) -> HPolytope<T> {
        let mut p = HPolytope::empty(self.dim());
        p.push_box(self);
        p
    }
}

/// `{ θ : A θ ≤ b }` with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope<T> {
    dim: usize,
    a: Vec<T>,
    b: Vec<T>,
    labels: Vec<RowLabel>,
}

impl<T: Scalar> HPolytope<T> {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            a: Vec::new(),
            b: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn new(dim: usize, rows: Vec<Vec<T>>, b: Vec<T>, labels: Vec<RowLabel>) -> Result<Self> {
        if rows.len() != b.len() || rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "polytope rows",
                expected: rows.len(),
                got: b.len().min(labels.len()),
            });
        }
        let mut p = Self::empty(dim);
        for ((row, rhs), label) in rows.iter().zip(b).zip(labels) {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "polytope row",
                    expected: dim,
                    got: row.len(),
                });
            }
            p.push_row(row, rhs, label);
        }
        Ok(p)
    }

    pub fn push_row(&mut self, row: &[T], rhs: T, label: RowLabel) {
        debug_assert_eq!(row.len(), self.dim);
        self.a.extend_from_slice(row);
        self.b.push(rhs);
        self.labels.push(label);
    }

    pub fn push_box(&mut self, bx: &ThetaBox<T>) {
        let mut e = vec![T::zero(); self.dim];
        for i in 0..self.dim {
            e[i] = -T::one();
            self.push_row(&e, -bx.lo[i], RowLabel::BoxLower(i));
            e[i] = T::one();
            self.push_row(&e, bx.hi[i], RowLabel::BoxUpper(i));
            e[i] = T::zero();
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.a[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rhs(&self, i: usize) -> T {
        self.b[i]
    }

    pub fn label(&self, i: usize) -> RowLabel {
        self.labels[i]
    }

    pub fn labels(&self) -> &[RowLabel] {
        &self.labels
    }

    pub fn index_of(&self, label: RowLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Row `i` scaled to a unit normal, or `None` for an all-zero row.
    fn unit_row(&self, i: usize) -> Option<(Vec<T>, T)> {
        let row = self.row(i);
        let nrm = norm2(row);
        if nrm <= T::pivot_tol() {
            return None;
        }
        Some((row.iter().map(|&v| v / nrm).collect(), self.b[i] / nrm))
    }

    /// Smallest normalised slack `b_i − a_i·θ` over all rows (`+∞` without rows).
    pub fn min_slack(&self, theta: &[T]) -> T {
        (0..self.rows())
            .map(|i| {
                let row = self.row(i);
                let nrm = norm2(row);
                let s = self.b[i] - dot(row, theta);
                if nrm > T::pivot_tol() {
                    s / nrm
                } else if s >= T::zero() {
                    T::infinity()
                } else {
                    T::neg_infinity()
                }
            })
            .fold(T::infinity(), T::min)
    }

    /// `A θ ≤ b + tol` row-wise (rows normalised).
    pub fn contains(&self, theta: &[T], tol: T) -> bool {
        self.min_slack(theta) >= -tol
    }

    /// `A θ ≤ b − eps` row-wise (rows normalised).
    pub fn strictly_contains(&self, theta: &[T], eps: T) -> bool {
        self.min_slack(theta) >= eps
    }

    /// A copy keeping only the rows for which `keep` returns true.
    pub fn filter_rows(&self, mut keep: impl FnMut(usize, RowLabel) -> bool) -> Self {
        let mut p = Self::empty(self.dim);
        for i in 0..self.rows() {
            if keep(i, self.labels[i]) {
                p.push_row(self.row(i), self.b[i], self.labels[i]);
            }
        }
        p
    }

    /// Slack-maximising LP over the rows accepted by `keep`, optionally with
    /// row `on_face` held with equality. Returns `(θ, margin)`.
    fn max_margin(
        &self,
        on_face: Option<usize>,
        mut keep: impl FnMut(usize) -> bool,
    ) -> Result<Option<(Vec<T>, T)>> {
        let n = self.dim;
        let mut objective = vec![T::zero(); n + 1];
        objective[n] = -T::one();
        let mut lp = LinearProgram::new(objective);
        let mut ext = vec![T::zero(); n + 1];
        for i in 0..self.rows() {
            if Some(i) == on_face || !keep(i) {
                continue;
            }
            match self.unit_row(i) {
                Some((row, rhs)) => {
                    ext[..n].copy_from_slice(&row);
                    ext[n] = T::one();
                    lp.le(&ext, rhs);
                }
                None if self.b[i] < T::zero() => return Ok(None),
                None => {}
            }
        }
        if let Some(f) = on_face {
            let Some((row, rhs)) = self.unit_row(f) else {
                return Ok(None);
            };
            ext[..n].copy_from_slice(&row);
            ext[n] = T::zero();
            lp.eq(&ext, rhs);
        }
        ext.iter_mut().for_each(|v| *v = T::zero());
        ext[n] = T::one();
        lp.le(&ext, T::one());
        match lp.solve()? {
            LpOutcome::Optimal { mut x, .. } => {
                let margin = x.pop().expect("margin variable");
                Ok(Some((x, margin)))
            }
            LpOutcome::Infeasible => Ok(None),
            LpOutcome::Unbounded => Err(Error::Solver("margin LP reported unbounded".into())),
        }
    }

    /// A point at least `eps` inside every half-space, or `None` when the
    /// polytope is empty or has no volume.
    pub fn feasible_interior_point(&self, eps: T) -> Result<Option<Vec<T>>> {
        Ok(self
            .max_margin(None, |_| true)?
            .and_then(|(x, m)| (m >= eps).then_some(x)))
    }

    /// A point on the hyperplane of row `label` that is at least `eps`
    /// inside every other row; `None` means the row is not a facet.
    pub fn interior_point_on_face(&self, label: RowLabel, eps: T) -> Result<Option<Vec<T>>> {
        let f = self.index_of(label).ok_or(Error::IndexOutOfRange {
            what: "polytope row",
            index: usize::MAX,
            len: self.rows(),
        })?;
        Ok(self
            .max_margin(Some(f), |_| true)?
            .and_then(|(x, m)| (m >= eps).then_some(x)))
    }

    /// Where the ray `origin + t·direction, t ≥ 0` meets the hyperplane of
    /// row `label`, provided that point is at least `eps` inside all other rows.
    pub fn interior_point_on_line(
        &self,
        label: RowLabel,
        origin: &[T],
        direction: &[T],
        eps: T,
    ) -> Result<Option<Vec<T>>> {
        let f = self.index_of(label).ok_or(Error::IndexOutOfRange {
            what: "polytope row",
            index: usize::MAX,
            len: self.rows(),
        })?;
        if origin.len() != self.dim || direction.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "search line",
                expected: self.dim,
                got: origin.len().min(direction.len()),
            });
        }
        let Some((row, rhs)) = self.unit_row(f) else {
            return Ok(None);
        };
        let along = dot(&row, direction);
        if along.abs() <= T::pivot_tol() {
            return Ok(None);
        }
        let t = (rhs - dot(&row, origin)) / along;
        if t < T::zero() {
            return Ok(None);
        }
        let point: Vec<T> = origin
            .iter()
            .zip(direction)
            .map(|(&o, &d)| o + t * d)
            .collect();
        let others_ok = (0..self.rows()).filter(|&i| i != f).all(|i| match self.unit_row(i) {
            Some((r, b)) => b - dot(&r, &point) >= eps,
            None => self.b[i] >= T::zero(),
        });
        Ok(others_ok.then_some(point))
    }

    /// Exact minimum of `c·θ` over the polytope and a minimiser.
    pub fn minimize_linear(&self, c: &[T]) -> Result<(T, Vec<T>)> {
        if c.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "objective",
                expected: self.dim,
                got: c.len(),
            });
        }
        let mut lp = LinearProgram::new(c.to_vec());
        for i in 0..self.rows() {
            match self.unit_row(i) {
                Some((row, rhs)) => lp.le(&row, rhs),
                None if self.b[i] < T::zero() => return Err(Error::Infeasible),
                None => {}
            }
        }
        match lp.solve()? {
            LpOutcome::Optimal { x, value } => Ok((value, x)),
            LpOutcome::Infeasible => Err(Error::Infeasible),
            LpOutcome::Unbounded => Err(Error::Unbounded),
        }
    }

    /// `max_θ min_k (c_k·θ + d_k)` over the polytope, with a maximiser.
    pub fn maximize_min_affine(&self, forms: &[(Vec<T>, T)]) -> Result<(T, Vec<T>)> {
        let n = self.dim;
        let mut objective = vec![T::zero(); n + 1];
        objective[n] = -T::one();
        let mut lp = LinearProgram::new(objective);
        let mut ext = vec![T::zero(); n + 1];
        for i in 0..self.rows() {
            match self.unit_row(i) {
                Some((row, rhs)) => {
                    ext[..n].copy_from_slice(&row);
                    ext[n] = T::zero();
                    lp.le(&ext, rhs);
                }
                None if self.b[i] < T::zero() => return Err(Error::Infeasible),
                None => {}
            }
        }
        for (c, d) in forms {
            if c.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "affine form",
                    expected: n,
                    got: c.len(),
                });
            }
            // t - c·θ <= d
            for (e, &v) in ext.iter_mut().zip(c) {
                *e = -v;
            }
            ext[n] = T::one();
            lp.le(&ext, *d);
        }
        match lp.solve()? {
            LpOutcome::Optimal { mut x, .. } => {
                let t = x.pop().expect("epigraph variable");
                Ok((t, x))
            }
            LpOutcome::Infeasible => Err(Error::Infeasible),
            LpOutcome::Unbounded => Err(Error::Unbounded),
        }
    }

    /// Rows whose hyperplane touches the polytope in a full facet. Box rows are
    /// checked like any other.
    pub fn facets(&self, eps: T) -> Result<FaceSet> {
        let mut fs = FaceSet::new();
        for &label in &self.labels {
            if self.interior_point_on_face(label, eps)?.is_some() {
                fs.insert(label);
            }
        }
        Ok(fs)
    }

    /// Keeps the rows listed in `fs` plus every parameter-box row.
    pub fn simplify(&self, fs: &FaceSet) -> Self {
        self.filter_rows(|_, label| label.is_box() || fs.contains(&label))
    }

    /// Counter-clockwise vertex cycle of a bounded 2-D polytope.
    pub fn vertices_2d(&self) -> Result<Vec<[T; 2]>> {
        if self.dim != 2 {
            return Err(Error::DimensionMismatch {
                context: "vertex enumeration",
                expected: 2,
                got: self.dim,
            });
        }
        for c in [[T::one(), T::zero()], [T::zero(), T::one()]] {
            self.minimize_linear(&c)?;
            self.minimize_linear(&[-c[0], -c[1]])?;
        }
        let feas_tol = T::lit(1e-9);
        let dedup_tol = T::lit(1e-9);
        let unit: Vec<(Vec<T>, T)> = (0..self.rows()).filter_map(|i| self.unit_row(i)).collect();
        let mut verts: Vec<[T; 2]> = Vec::new();
        for i in 0..unit.len() {
            for j in i + 1..unit.len() {
                let (a, b) = (&unit[i].0, &unit[j].0);
                let det = a[0] * b[1] - a[1] * b[0];
                if det.abs() <= T::lit(1e-12) {
                    continue;
                }
                let x = (unit[i].1 * b[1] - a[1] * unit[j].1) / det;
                let y = (a[0] * unit[j].1 - unit[i].1 * b[0]) / det;
                let p = [x, y];
                if unit.iter().all(|(r, rhs)| dot(r, &p) <= *rhs + feas_tol)
                    && !verts
                        .iter()
                        .any(|q| (q[0] - x).abs() <= dedup_tol && (q[1] - y).abs() <= dedup_tol)
                {
                    verts.push(p);
                }
            }
        }
        if verts.is_empty() {
            return Ok(verts);
        }
        let k = T::from_usize(verts.len()).expect("vertex count");
        let cx = verts.iter().map(|v| v[0]).sum::<T>() / k;
        let cy = verts.iter().map(|v| v[1]).sum::<T>() / k;
        verts.sort_by(|p, q| {
            let ap = (p[1] - cy).atan2(p[0] - cx);
            let aq = (q[1] - cy).atan2(q[0] - cx);
            ap.partial_cmp(&aq).unwrap_or(std::cmp::Ordering::Equal)
        });
        Ok(verts)
    }
}

/// Whether `a·θ − b` keeps one sign over the whole box. A linear function on
/// a box attains its extremes at corners, so checking corners is exact.
/// Touching zero on the box boundary still counts as stable.
pub fn is_stable<T: Scalar>(a: &[T], b: T, bx: &ThetaBox<T>) -> bool {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for v in bx.vertices() {
        let s = dot(a, &v) - b;
        lo = lo.min(s);
        hi = hi.max(s);
    }
    hi <= T::zero() || lo >= T::zero()
}
