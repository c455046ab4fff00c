//! Seeded random problem instances shared by integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet, VecDeque};

use attverify_core::{
    grid_points, ActivationPattern, AffineLayer, AttentionConfig, ClassVerdict, HPolytope, ImageMeta, Network,
    PerturbationKind, PerturbationSpec, Problem, RegionVerdict, ThetaBox, TraversalResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense layer with weights uniform in `±sqrt(3 / fan_in)·gain`.
pub fn random_layer(rng: &mut impl Rng, input: usize, output: usize, relu: bool, gain: f64) -> AffineLayer<f64> {
    let s = (3.0 / input as f64).sqrt() * gain;
    let rows = (0..output)
        .map(|_| (0..input).map(|_| rng.gen_range(-s..s)).collect())
        .collect();
    let bias = (0..output).map(|_| rng.gen_range(-0.3..0.3)).collect();
    AffineLayer::new(rows, bias, relu).unwrap()
}

/// ReLU hidden layers of the given widths and a linear output layer.
pub fn random_network(rng: &mut impl Rng, input: usize, hidden: &[usize], classes: usize) -> Network<f64> {
    let mut layers = Vec::new();
    let mut width = input;
    for &h in hidden {
        layers.push(random_layer(rng, width, h, true, 1.0));
        width = h;
    }
    layers.push(random_layer(rng, width, classes, false, 1.0));
    Network::new(layers).unwrap()
}

/// Hidden widths: 1–3 layers summing to `total`.
pub fn random_widths(rng: &mut impl Rng, total: usize) -> Vec<usize> {
    let layers = rng.gen_range(1..=3usize).min(total);
    let mut widths = vec![1; layers];
    for _ in layers..total {
        let k = rng.gen_range(0..layers);
        widths[k] += 1;
    }
    widths
}

/// Mostly mid-grey pixels, some exact 0 and 1, and a few close enough to
/// the clipping thresholds to cross them inside Θ.
pub fn random_image(rng: &mut impl Rng, meta: ImageMeta) -> Vec<f64> {
    let mut x: Vec<f64> = (0..meta.pixels())
        .map(|_| match rng.gen_range(0..20) {
            0..=4 => 0.0,
            5..=6 => 1.0,
            _ => rng.gen_range(0.35..0.65),
        })
        .collect();
    for _ in 0..rng.gen_range(1..=2) {
        let i = rng.gen_range(0..x.len());
        x[i] = if rng.gen_bool(0.5) {
            rng.gen_range(0.05..0.2)
        } else {
            rng.gen_range(0.8..0.95)
        };
    }
    x
}

pub fn random_patch(rng: &mut impl Rng, meta: ImageMeta) -> PerturbationKind {
    let pw = rng.gen_range(1..=3);
    let ph = rng.gen_range(1..=3);
    PerturbationKind::Patch {
        px: rng.gen_range(0..meta.height - pw),
        py: rng.gen_range(0..meta.width - ph),
        pw,
        ph,
    }
}

/// Parameter interval of an atom.
pub fn atom_range(kind: &PerturbationKind) -> (f64, f64) {
    match kind {
        PerturbationKind::Brightness => (-0.1, 0.15),
        PerturbationKind::Patch { .. } => (-0.1, 0.15),
        PerturbationKind::Translation { .. } => (0.0, 0.3),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combo {
    Bp,
    Tp,
    Tb,
}

pub const COMBOS: [Combo; 3] = [Combo::Bp, Combo::Tp, Combo::Tb];

pub fn combo_atoms(rng: &mut impl Rng, combo: Combo, meta: ImageMeta) -> Vec<PerturbationKind> {
    let t = PerturbationKind::Translation { tx: 1 };
    match combo {
        Combo::Bp => vec![PerturbationKind::Brightness, random_patch(rng, meta)],
        Combo::Tp => vec![t, random_patch(rng, meta)],
        Combo::Tb => vec![t, PerturbationKind::Brightness],
    }
}

pub fn spec_for(atoms: Vec<PerturbationKind>, meta: ImageMeta) -> PerturbationSpec<f64> {
    let (lo, hi): (Vec<f64>, Vec<f64>) = atoms.iter().map(atom_range).unzip();
    PerturbationSpec::new(atoms, ThetaBox::new(lo, hi).unwrap(), meta).unwrap()
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub f: Network<f64>,
    pub spec: PerturbationSpec<f64>,
    pub x0: Vec<f64>,
}

impl Instance {
    pub fn problem(&self, cfg: AttentionConfig<f64>) -> Problem<f64> {
        Problem::new(self.f.clone(), self.spec.clone(), self.x0.clone(), cfg).unwrap()
    }
}

/// 6×6 to 10×10 image, 10–40 ReLU neurons in 1–3 hidden layers, three
/// classes, and a 2-D parameter box.
pub fn random_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let side = r.gen_range(6..=10);
    let meta = ImageMeta::new(side, side);
    let total = r.gen_range(10..=40);
    let widths = random_widths(&mut r, total);
    let f = random_network(&mut r, meta.pixels(), &widths, 3);
    let x0 = random_image(&mut r, meta);
    let combo = COMBOS[(seed % 3) as usize];
    let atoms = combo_atoms(&mut r, combo, meta);
    Instance {
        seed,
        f,
        spec: spec_for(atoms, meta),
        x0,
    }
}

/// Uniform point of the parameter box.
pub fn random_theta(rng: &mut impl Rng, spec: &PerturbationSpec<f64>) -> Vec<f64> {
    let bx = spec.theta_box();
    bx.lo().iter().zip(bx.hi()).map(|(&l, &h)| rng.gen_range(l..=h)).collect()
}

/// Distinct composite patterns met on a `resolution`² grid over Θ.
pub struct Census {
    /// Patterns whose region has an interior inside Θ.
    pub full: HashSet<ActivationPattern>,
    /// Patterns seen only on lower-dimensional pieces (shared faces, vertices).
    pub degenerate: usize,
}

pub fn census(problem: &Problem<f64>, resolution: usize) -> Census {
    let comp = problem.composite();
    let bx = problem.spec().theta_box();
    let mut seen = HashSet::new();
    for theta in grid_points(bx.lo(), bx.hi(), resolution) {
        seen.insert(comp.activation_pattern(&theta).unwrap());
    }
    let mut full = HashSet::new();
    let mut degenerate = 0;
    for p in seen {
        let mut poly = comp.region_halfspaces(&p).unwrap();
        poly.push_box(bx);
        if poly.feasible_interior_point(problem.eps()).unwrap().is_some() {
            full.insert(p);
        } else {
            degenerate += 1;
        }
    }
    Census { full, degenerate }
}

/// Radius of the largest ball inside `poly`.
pub fn inradius(poly: &HPolytope<f64>) -> f64 {
    let forms: Vec<(Vec<f64>, f64)> = (0..poly.rows())
        .filter_map(|i| {
            let a = poly.row(i);
            let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            (n > 0.0).then(|| (a.iter().map(|v| -v / n).collect(), poly.rhs(i) / n))
        })
        .collect();
    poly.maximize_min_affine(&forms).map(|(t, _)| t).unwrap_or(0.0)
}

fn farthest_vertex(v: &RegionVerdict<f64>) -> f64 {
    v.region
        .vertices_2d()
        .unwrap()
        .iter()
        .map(|p| p[0].hypot(p[1]))
        .fold(0.0, f64::max)
}

/// Boundary sets derived from a complete BFS run by flood fill.
pub struct BoundaryOracle {
    /// Regions reachable from the seed through CR regions.
    pub reachable: HashSet<ActivationPattern>,
    /// CB component holding the farthest reachable point.
    pub outermost: HashSet<ActivationPattern>,
    /// Regions neither reachable, nor in the outermost component, nor next to it.
    pub beyond: usize,
}

/// `res.regions[0]` must be the seed region.
pub fn boundary_oracle(res: &TraversalResult<f64>) -> BoundaryOracle {
    let regions = &res.regions;
    let idx: HashMap<&ActivationPattern, usize> =
        regions.iter().enumerate().map(|(i, r)| (&r.verdict.pattern, i)).collect();
    let adj: Vec<Vec<usize>> = regions
        .iter()
        .map(|r| r.neighbors.iter().filter_map(|q| idx.get(q).copied()).collect())
        .collect();
    let cls: Vec<ClassVerdict> = regions.iter().map(|r| r.verdict.cls_verdict).collect();

    let flood = |start: Vec<usize>, pass: &dyn Fn(usize) -> bool, enter: &dyn Fn(usize) -> bool| {
        let mut seen: HashSet<usize> = start.iter().copied().collect();
        let mut queue: VecDeque<usize> = start.into();
        while let Some(i) = queue.pop_front() {
            if !pass(i) {
                continue;
            }
            for &j in &adj[i] {
                if enter(j) && seen.insert(j) {
                    queue.push_back(j);
                }
            }
        }
        seen
    };

    let reach = flood(vec![0], &|i| cls[i] == ClassVerdict::Cr, &|_| true);
    let far = reach
        .iter()
        .copied()
        .filter(|&i| cls[i] == ClassVerdict::Cb)
        .max_by(|&a, &b| farthest_vertex(&regions[a].verdict).total_cmp(&farthest_vertex(&regions[b].verdict)));
    let outer = match far {
        Some(s) => flood(vec![s], &|_| true, &|j| cls[j] == ClassVerdict::Cb),
        None => HashSet::new(),
    };
    let mut band: HashSet<usize> = reach.union(&outer).copied().collect();
    for &i in &outer {
        band.extend(adj[i].iter().copied());
    }
    let pats = |s: &HashSet<usize>| s.iter().map(|&i| regions[i].verdict.pattern.clone()).collect();
    BoundaryOracle {
        reachable: pats(&reach),
        outermost: pats(&outer),
        beyond: regions.len() - band.len(),
    }
}
