//! Enumeration of the activation regions of `f ∘ g` over Θ: breadth-first
//! traversal and Geometric Boundary Search.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::lp::lp_calls;
use crate::nn::{ActivationPattern, NeuronId};
use crate::polytope::{is_stable, FaceSet, HPolytope, RowLabel};
use crate::scalar::{norm2, Scalar};
use crate::verify::{AttentionVerdict, ClassVerdict, Problem, RegionVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraversalMode {
    Bfs,
    GbsCr,
    GbsAr,
    GbsCrar,
}

impl TraversalMode {
    pub fn name(&self) -> &'static str {
        match self {
            TraversalMode::Bfs => "bfs",
            TraversalMode::GbsCr => "gbs-cr",
            TraversalMode::GbsAr => "gbs-ar",
            TraversalMode::GbsCrar => "gbs-crar",
        }
    }

    fn tracks_cr(&self) -> bool {
        matches!(self, TraversalMode::GbsCr | TraversalMode::GbsCrar)
    }

    fn tracks_ar(&self) -> bool {
        matches!(self, TraversalMode::GbsAr | TraversalMode::GbsCrar)
    }
}

impl fmt::Display for TraversalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TraversalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bfs" => Ok(TraversalMode::Bfs),
            "gbs-cr" => Ok(TraversalMode::GbsCr),
            "gbs-ar" => Ok(TraversalMode::GbsAr),
            "gbs-crar" => Ok(TraversalMode::GbsCrar),
            other => Err(Error::InvalidConfig(format!("unknown traversal mode `{other}`"))),
        }
    }
}

/// Work limits. Hitting one ends the traversal with a partial result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub time_limit: Option<Duration>,
    pub max_regions: Option<usize>,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            time_limit: Some(Duration::from_secs(7200)),
            max_regions: None,
        }
    }
}

impl Budget {
    pub fn unlimited() -> Self {
        Self {
            time_limit: None,
            max_regions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraversalConfig<T> {
    /// Margin required of interior and face points.
    pub eps: T,
    /// Search-ray direction from `0`; defaults to the corner of Θ farthest
    /// from the origin.
    pub ray: Option<Vec<T>>,
}

impl<T: Scalar> Default for TraversalConfig<T> {
    fn default() -> Self {
        Self {
            eps: T::default_eps(),
            ray: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraversalStats {
    pub regions_verified: usize,
    pub faces_checked: usize,
    pub stable_skipped: usize,
    pub lp_calls: u64,
    pub elapsed: Duration,
    pub budget_exhausted: bool,
}

/// One verified region with its place in the traversal.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitedRegion<T> {
    pub verdict: RegionVerdict<T>,
    /// Patterns across each facet, including already-visited ones.
    pub neighbors: Vec<ActivationPattern>,
    pub following: bool,
    pub line_distance: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraversalResult<T> {
    pub mode: TraversalMode,
    /// In visiting order.
    pub regions: Vec<VisitedRegion<T>>,
    pub stats: TraversalStats,
}

impl<T: Scalar> TraversalResult<T> {
    fn with_cls(&self, c: ClassVerdict) -> impl Iterator<Item = &RegionVerdict<T>> {
        self.regions.iter().map(|r| &r.verdict).filter(move |v| v.cls_verdict == c)
    }

    fn with_attn(&self, a: AttentionVerdict) -> impl Iterator<Item = &RegionVerdict<T>> {
        self.regions.iter().map(|r| &r.verdict).filter(move |v| v.attn_verdict == a)
    }

    pub fn h_cr(&self) -> impl Iterator<Item = &RegionVerdict<T>> {
        self.with_cls(ClassVerdict::Cr)
    }

    pub fn h_mr(&self) -> impl Iterator<Item = &RegionVerdict<T>> {
        self.with_cls(ClassVerdict::Mr)
    }

    pub fn h_cb(&self) -> impl Iterator<Item = &RegionVerdict<T>> {
        self.with_cls(ClassVerdict::Cb)
    }

    pub fn h_ar(&self) -> impl Iterator<Item = &RegionVerdict<T>> {
        self.with_attn(AttentionVerdict::Ar)
    }

    pub fn h_ir(&self) -> impl Iterator<Item = &RegionVerdict<T>> {
        self.with_attn(AttentionVerdict::Ir)
    }

    pub fn h_ab(&self) -> impl Iterator<Item = &RegionVerdict<T>> {
        self.with_attn(AttentionVerdict::Ab)
    }

    pub fn verdicts(&self) -> Vec<RegionVerdict<T>> {
        self.regions.iter().map(|r| r.verdict.clone()).collect()
    }

    pub fn patterns(&self) -> impl Iterator<Item = &ActivationPattern> {
        self.regions.iter().map(|r| &r.verdict.pattern)
    }
}

/// Region of `p` restricted to Θ, with its facets.
struct Built<T> {
    region: HPolytope<T>,
    /// Neurons whose (shared) hyperplane is a facet, grouped when several
    /// neurons cut along the same hyperplane, in neuron order.
    faces: Vec<Vec<NeuronId>>,
}

/// Groups of rows describing the same half-space (normalised rows and
/// right-hand sides equal within a relative tolerance).
fn coincident_groups<T: Scalar>(poly: &HPolytope<T>, rows: &[usize]) -> Vec<Vec<usize>> {
    let tol = T::lit(1e-9);
    let unit: Vec<(Vec<T>, T)> = rows
        .iter()
        .map(|&i| {
            let n = norm2(poly.row(i));
            (poly.row(i).iter().map(|&v| v / n).collect(), poly.rhs(i) / n)
        })
        .collect();
    let mut group_of: Vec<Option<usize>> = vec![None; rows.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for a in 0..rows.len() {
        if group_of[a].is_some() {
            continue;
        }
        group_of[a] = Some(groups.len());
        let mut g = vec![rows[a]];
        for b in a + 1..rows.len() {
            if group_of[b].is_none()
                && (unit[a].1 - unit[b].1).abs() <= tol
                && unit[a].0.iter().zip(&unit[b].0).all(|(&x, &y)| (x - y).abs() <= tol)
            {
                group_of[b] = Some(groups.len());
                g.push(rows[b]);
            }
        }
        groups.push(g);
    }
    groups
}

struct Walker<'a, T> {
    problem: &'a Problem<T>,
    eps: T,
    budget: Budget,
    started: Instant,
    lp_start: u64,
    stats: TraversalStats,
}

impl<'a, T: Scalar> Walker<'a, T> {
    fn new(problem: &'a Problem<T>, cfg: &TraversalConfig<T>, budget: Budget) -> Self {
        Self {
            problem,
            eps: cfg.eps,
            budget,
            started: Instant::now(),
            lp_start: lp_calls(),
            stats: TraversalStats::default(),
        }
    }

    fn out_of_budget(&self) -> bool {
        self.budget
            .time_limit
            .is_some_and(|t| self.started.elapsed() >= t)
            || self
                .budget
                .max_regions
                .is_some_and(|m| self.stats.regions_verified >= m)
    }

    /// `None` when the pattern's region has no interior inside Θ.
    fn build(&mut self, p: &ActivationPattern) -> Result<Option<Built<T>>> {
        let bx = self.problem.spec().theta_box();
        let full = self.problem.composite().region_halfspaces(p)?;
        let mut skipped = 0;
        let mut region = full.filter_rows(|i, _| {
            let stable = norm2(full.row(i)) <= T::pivot_tol() || is_stable(full.row(i), full.rhs(i), bx);
            skipped += stable as usize;
            !stable
        });
        self.stats.stable_skipped += skipped;
        let neuron_rows: Vec<usize> = (0..region.rows()).collect();
        region.push_box(bx);
        if region.feasible_interior_point(self.eps)?.is_none() {
            return Ok(None);
        }
        let mut facets = FaceSet::new();
        let mut faces = Vec::new();
        for group in coincident_groups(&region, &neuron_rows) {
            let lead = region.label(group[0]);
            let twins = &group[1..];
            let probe = if twins.is_empty() {
                None
            } else {
                Some(region.filter_rows(|i, _| !twins.contains(&i)))
            };
            self.stats.faces_checked += 1;
            if probe
                .as_ref()
                .unwrap_or(&region)
                .interior_point_on_face(lead, self.eps)?
                .is_some()
            {
                facets.insert(lead);
                faces.push(group.iter().filter_map(|&i| region.label(i).neuron()).collect());
            }
        }
        Ok(Some(Built {
            region: region.simplify(&facets),
            faces,
        }))
    }

    fn finish(mut self, mode: TraversalMode, regions: Vec<VisitedRegion<T>>, exhausted: bool) -> TraversalResult<T> {
        self.stats.elapsed = self.started.elapsed();
        self.stats.lp_calls = lp_calls() - self.lp_start;
        self.stats.budget_exhausted = exhausted;
        TraversalResult {
            mode,
            regions,
            stats: self.stats,
        }
    }
}

fn flipped(p: &ActivationPattern, ids: &[NeuronId]) -> Result<ActivationPattern> {
    let mut q = p.clone();
    for &id in ids {
        q = q.flip(id)?;
    }
    Ok(q)
}

/// Pattern of the region at `0`, nudging into Θ when `0` lies on a region
/// boundary and its pattern has no interior.
fn seed_pattern<T: Scalar>(problem: &Problem<T>, ray: &[T], eps: T) -> Result<ActivationPattern> {
    let comp = problem.composite();
    let bx = problem.spec().theta_box();
    let zero = vec![T::zero(); bx.dim()];
    let p0 = comp.activation_pattern(&zero)?;
    if has_interior(problem, &p0, eps)? {
        return Ok(p0);
    }
    // Hyperplanes through 0 tend to contain the symmetric directions (ray,
    // box diagonal), so skew each axis by a different irrational factor.
    let phi = T::lit(0.618_033_988_749_894_9);
    let mut directions = Vec::new();
    for base in [ray.to_vec(), bx.farthest_corner(), bx.center()] {
        let mut skew = T::one();
        let skewed: Vec<T> = base
            .iter()
            .map(|&v| {
                skew = skew * phi + T::lit(0.2);
                v * skew
            })
            .collect();
        directions.push(base);
        directions.push(skewed);
    }
    for dir in directions {
        if norm2(&dir) == T::zero() {
            continue;
        }
        for k in [6, 5, 4, 3, 2] {
            let t = T::lit(10f64.powi(-k));
            let theta: Vec<T> = dir.iter().map(|&d| d * t).collect();
            if !bx.contains(&theta) {
                continue;
            }
            let p = comp.activation_pattern(&theta)?;
            if has_interior(problem, &p, eps)? {
                tracing::debug!("seed pattern taken at {:?}", theta.iter().map(|v| v.as_f64()).collect::<Vec<_>>());
                return Ok(p);
            }
        }
    }
    Err(Error::Solver("no full-dimensional activation region found next to θ = 0".into()))
}

fn has_interior<T: Scalar>(problem: &Problem<T>, p: &ActivationPattern, eps: T) -> Result<bool> {
    let mut region = problem.composite().region_halfspaces(p)?;
    region.push_box(problem.spec().theta_box());
    Ok(region.feasible_interior_point(eps)?.is_some())
}

/// Breadth-first traversal of every region reachable from the seed.
pub fn bfs<T: Scalar>(problem: &Problem<T>, cfg: &TraversalConfig<T>, budget: Budget) -> Result<TraversalResult<T>> {
    let mut w = Walker::new(problem, cfg, budget);
    let ray = search_ray(problem, cfg)?;
    let seed = seed_pattern(problem, &ray, w.eps)?;
    let mut seen: HashSet<ActivationPattern> = HashSet::from([seed.clone()]);
    let mut queue = VecDeque::from([seed]);
    let mut regions = Vec::new();
    while let Some(p) = queue.pop_front() {
        if w.out_of_budget() {
            return Ok(w.finish(TraversalMode::Bfs, regions, true));
        }
        let Some(built) = w.build(&p)? else {
            tracing::warn!("pattern {} has no interior inside the parameter box; skipped", p);
            continue;
        };
        let mut neighbors = Vec::with_capacity(built.faces.len());
        for ids in &built.faces {
            let q = flipped(&p, ids)?;
            if seen.insert(q.clone()) {
                queue.push_back(q.clone());
            }
            neighbors.push(q);
        }
        let verdict = problem.verify(built.region, &p)?;
        w.stats.regions_verified += 1;
        regions.push(VisitedRegion {
            verdict,
            neighbors,
            following: false,
            line_distance: T::zero(),
        });
    }
    Ok(w.finish(TraversalMode::Bfs, regions, false))
}

#[derive(Debug, Clone)]
struct Entry<T> {
    pattern: ActivationPattern,
    following: bool,
    line_distance: T,
}

impl<T: Scalar> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Entry<T> {}

impl<T: Scalar> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Max-heap order: larger line distance first, then the lexicographically
/// smaller pattern.
impl<T: Scalar> Ord for Entry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.line_distance
            .partial_cmp(&other.line_distance)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.pattern.cmp(&self.pattern))
    }
}

fn near_boundary<T: Scalar>(lo: T, up: T, delta: T, w: T) -> bool {
    (lo <= delta && delta <= up) || (lo - delta).abs() <= w || (up - delta).abs() <= w
}

fn search_ray<T: Scalar>(problem: &Problem<T>, cfg: &TraversalConfig<T>) -> Result<Vec<T>> {
    let bx = problem.spec().theta_box();
    match &cfg.ray {
        Some(r) if r.len() != bx.dim() => Err(Error::DimensionMismatch {
            context: "search ray",
            expected: bx.dim(),
            got: r.len(),
        }),
        Some(r) if norm2(r) == T::zero() => Err(Error::InvalidConfig("search ray must be nonzero".into())),
        Some(r) => Ok(r.clone()),
        None => Ok(bx.farthest_corner()),
    }
}

/// Geometric Boundary Search toward the outermost CR and/or AR boundary.
pub fn gbs<T: Scalar>(
    problem: &Problem<T>,
    cfg: &TraversalConfig<T>,
    mode: TraversalMode,
    budget: Budget,
) -> Result<TraversalResult<T>> {
    if mode == TraversalMode::Bfs {
        return Err(Error::InvalidConfig("gbs needs a boundary-search mode".into()));
    }
    let acfg = problem.config();
    if mode.tracks_ar() && !(acfg.w_delta > T::zero()) {
        return Err(Error::InvalidConfig(
            "attention boundary search needs w_delta > 0".into(),
        ));
    }
    let ray = search_ray(problem, cfg)?;
    let origin = vec![T::zero(); ray.len()];
    let mut w = Walker::new(problem, cfg, budget);
    let seed = seed_pattern(problem, &ray, w.eps)?;
    let mut seen: HashSet<ActivationPattern> = HashSet::from([seed.clone()]);
    let mut heap = BinaryHeap::from([Entry {
        pattern: seed,
        following: false,
        line_distance: T::zero(),
    }]);
    let mut regions = Vec::new();

    while let Some(mut q) = heap.pop() {
        if w.out_of_budget() {
            return Ok(w.finish(mode, regions, true));
        }
        let p = q.pattern.clone();
        let Some(built) = w.build(&p)? else {
            tracing::warn!("pattern {} has no interior inside the parameter box; skipped", p);
            continue;
        };
        let mut local = Vec::new();
        let mut neighbors = Vec::with_capacity(built.faces.len());
        for ids in &built.faces {
            let next = flipped(&p, ids)?;
            neighbors.push(next.clone());
            if seen.contains(&next) {
                continue;
            }
            let hit = built
                .region
                .interior_point_on_line(RowLabel::Neuron(ids[0]), &origin, &ray, w.eps)?;
            let dist = hit.as_deref().map(norm2);
            if q.following {
                if let Some(d) = dist.filter(|&d| d > q.line_distance) {
                    tracing::trace!("re-found the search line at distance {}", d);
                    q.following = false;
                }
            }
            local.push(match (q.following, dist) {
                (false, Some(d)) => Entry {
                    pattern: next,
                    following: false,
                    line_distance: d,
                },
                _ => Entry {
                    pattern: next,
                    following: q.following,
                    line_distance: q.line_distance,
                },
            });
        }

        let verdict = problem.verify(built.region, &p)?;
        w.stats.regions_verified += 1;

        let near_cr = mode.tracks_cr()
            && near_boundary(verdict.margin_range.lo, verdict.margin_range.up, T::zero(), T::zero());
        let near_ar = mode.tracks_ar()
            && near_boundary(verdict.ai_range.lo, verdict.ai_range.up, acfg.delta, acfg.w_delta);
        let near = near_cr || near_ar;
        let inside = (!mode.tracks_cr() || verdict.cls_verdict == ClassVerdict::Cr)
            && (!mode.tracks_ar() || verdict.attn_verdict == AttentionVerdict::Ar);
        let outside = (mode.tracks_cr() && verdict.cls_verdict == ClassVerdict::Mr)
            || (mode.tracks_ar() && verdict.attn_verdict == AttentionVerdict::Ir);
        if !near && ((inside && q.following) || outside) {
            local.clear();
        }
        if !q.following && near {
            local.iter_mut().for_each(|e| e.following = true);
        }

        local.retain(|e| seen.insert(e.pattern.clone()));

        regions.push(VisitedRegion {
            verdict,
            neighbors,
            following: q.following,
            line_distance: q.line_distance,
        });
        heap.extend(local);
    }
    Ok(w.finish(mode, regions, false))
}

/// Runs the traversal selected by `mode`.
pub fn traverse<T: Scalar>(
    problem: &Problem<T>,
    cfg: &TraversalConfig<T>,
    mode: TraversalMode,
    budget: Budget,
) -> Result<TraversalResult<T>> {
    match mode {
        TraversalMode::Bfs => bfs(problem, cfg, budget),
        _ => gbs(problem, cfg, mode, budget),
    }
}
