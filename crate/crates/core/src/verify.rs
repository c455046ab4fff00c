//! Region verdicts (CR/MR/CB, AR/IR/AB) and the dense-grid oracle used to
//! cross-check them.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::attention::{ai_range_for_maps, maps_for_pattern, margin_form, AttentionConfig, ValueRange};
use crate::error::{Error, Result};
use crate::nn::{ActivationPattern, Network};
use crate::perturb::{apply_direct, encode_with, expected_map_transform, Clipping, PerturbationSpec};
use crate::polytope::HPolytope;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassVerdict {
    /// Classification robust: the original label wins everywhere.
    Cr,
    /// Misclassification robust: the original label loses everywhere.
    Mr,
    /// Classification boundary.
    Cb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttentionVerdict {
    Ar,
    Ir,
    Ab,
}

impl ClassVerdict {
    pub fn code(&self) -> &'static str {
        match self {
            ClassVerdict::Cr => "CR",
            ClassVerdict::Mr => "MR",
            ClassVerdict::Cb => "CB",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "CR" => Some(ClassVerdict::Cr),
            "MR" => Some(ClassVerdict::Mr),
            "CB" => Some(ClassVerdict::Cb),
            _ => None,
        }
    }
}

impl AttentionVerdict {
    pub fn code(&self) -> &'static str {
        match self {
            AttentionVerdict::Ar => "AR",
            AttentionVerdict::Ir => "IR",
            AttentionVerdict::Ab => "AB",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "AR" => Some(AttentionVerdict::Ar),
            "IR" => Some(AttentionVerdict::Ir),
            "AB" => Some(AttentionVerdict::Ab),
            _ => None,
        }
    }
}

impl fmt::Display for ClassVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl fmt::Display for AttentionVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ClassVerdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_code(s).ok_or_else(|| Error::InvalidConfig(format!("unknown class verdict `{s}`")))
    }
}

impl FromStr for AttentionVerdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_code(s).ok_or_else(|| Error::InvalidConfig(format!("unknown attention verdict `{s}`")))
    }
}

/// Verdicts and value ranges of one activation region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionVerdict<T> {
    pub region: HPolytope<T>,
    pub pattern: ActivationPattern,
    pub cls_verdict: ClassVerdict,
    pub attn_verdict: AttentionVerdict,
    pub ai_range: ValueRange<T>,
    /// Range of `min_{j ≠ j0} (f_{j0} − f_j)` over the region.
    pub margin_range: ValueRange<T>,
    pub witness: Vec<T>,
}

impl<T: Scalar> RegionVerdict<T> {
    pub fn margin_min(&self) -> T {
        self.margin_range.lo
    }
}

pub fn class_verdict<T: Scalar>(margin: ValueRange<T>) -> ClassVerdict {
    if margin.lo > T::zero() {
        ClassVerdict::Cr
    } else if margin.up < T::zero() {
        ClassVerdict::Mr
    } else {
        ClassVerdict::Cb
    }
}

pub fn attention_verdict<T: Scalar>(ai: ValueRange<T>, delta: T) -> AttentionVerdict {
    if ai.up <= delta {
        AttentionVerdict::Ar
    } else if ai.lo > delta {
        AttentionVerdict::Ir
    } else {
        AttentionVerdict::Ab
    }
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// One verification instance: classifier, perturbation, image and
/// thresholds, with the encoded perturbation network and the quantities of
/// the unperturbed image cached.
#[derive(Debug, Clone)]
pub struct Problem<T> {
    f: Network<T>,
    spec: PerturbationSpec<T>,
    x0: Vec<T>,
    cfg: AttentionConfig<T>,
    eps: T,
    g_net: Network<T>,
    composite: Network<T>,
    g_relu_layers: usize,
    original_label: usize,
    original_maps: Vec<Vec<T>>,
}

impl<T: Scalar> Problem<T> {
    pub fn new(f: Network<T>, spec: PerturbationSpec<T>, x0: Vec<T>, cfg: AttentionConfig<T>) -> Result<Self> {
        Self::with_clipping(f, spec, x0, cfg, Clipping::Saturate)
    }

    pub fn with_clipping(
        f: Network<T>,
        spec: PerturbationSpec<T>,
        x0: Vec<T>,
        cfg: AttentionConfig<T>,
        clipping: Clipping,
    ) -> Result<Self> {
        let g_net = encode_with(&spec, &x0, clipping)?;
        Self::from_parts(f, g_net, spec, x0, cfg)
    }

    /// Uses a caller-supplied perturbation network `g_net: Θ → X`.
    pub fn from_parts(
        f: Network<T>,
        g_net: Network<T>,
        spec: PerturbationSpec<T>,
        x0: Vec<T>,
        cfg: AttentionConfig<T>,
    ) -> Result<Self> {
        cfg.validate()?;
        if f.output_dim() < 2 {
            return Err(Error::InvalidNetwork("classifier needs at least two classes".into()));
        }
        if g_net.input_dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                context: "perturbation network input",
                expected: spec.dim(),
                got: g_net.input_dim(),
            });
        }
        let composite = Network::compose(&f, &g_net)?;
        let logits = f.forward(&x0)?;
        let original_label = argmax(&logits);
        let p0 = f.activation_pattern(&x0)?;
        let original_maps = maps_for_pattern(&f, &p0, cfg.filter, spec.image())?;
        let g_relu_layers = g_net.relu_shape().len();
        Ok(Self {
            f,
            spec,
            x0,
            cfg,
            eps: T::default_eps(),
            g_net,
            composite,
            g_relu_layers,
            original_label,
            original_maps,
        })
    }

    pub fn with_eps(mut self, eps: T) -> Self {
        self.eps = eps;
        self
    }

    pub fn classifier(&self) -> &Network<T> {
        &self.f
    }

    pub fn spec(&self) -> &PerturbationSpec<T> {
        &self.spec
    }

    pub fn x0(&self) -> &[T] {
        &self.x0
    }

    pub fn config(&self) -> &AttentionConfig<T> {
        &self.cfg
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn perturbation_net(&self) -> &Network<T> {
        &self.g_net
    }

    pub fn composite(&self) -> &Network<T> {
        &self.composite
    }

    pub fn original_label(&self) -> usize {
        self.original_label
    }

    pub fn original_maps(&self) -> &[Vec<T>] {
        &self.original_maps
    }

    /// The classifier's share of a composite pattern.
    pub fn classifier_pattern(&self, p: &ActivationPattern) -> Result<ActivationPattern> {
        p.suffix_for(self.g_relu_layers, &self.f)
    }

    /// Verdicts for `region`, the (simplified) region of composite pattern `p`.
    pub fn verify(&self, region: HPolytope<T>, p: &ActivationPattern) -> Result<RegionVerdict<T>> {
        let witness = region
            .feasible_interior_point(self.eps)?
            .ok_or(Error::Infeasible)?;

        let lin = self.composite.affine_restriction(p)?;
        let j0 = self.original_label;
        let mut forms = Vec::with_capacity(lin.output_dim() - 1);
        let mut lo = T::infinity();
        for j in (0..lin.output_dim()).filter(|&j| j != j0) {
            let (c, d) = margin_form(&lin, j0, j)?;
            let (v, _) = region.minimize_linear(&c)?;
            lo = lo.min(v + d);
            forms.push((c, d));
        }
        let (up, _) = region.maximize_min_affine(&forms)?;
        let margin_range = ValueRange::new(lo, up);

        let fp = self.classifier_pattern(p)?;
        let maps = maps_for_pattern(&self.f, &fp, self.cfg.filter, self.spec.image())?;
        let ai_range = ai_range_for_maps(&self.spec, &maps, &self.original_maps, &region, self.cfg.dist)?;

        Ok(RegionVerdict {
            cls_verdict: class_verdict(margin_range),
            attn_verdict: attention_verdict(ai_range, self.cfg.delta),
            pattern: p.clone(),
            region,
            ai_range,
            margin_range,
            witness,
        })
    }
}

/// Verdicts for one region of `f ∘ g_net`; the pattern is read off an
/// interior point.
pub fn verify_region<T: Scalar>(
    f: &Network<T>,
    g_net: &Network<T>,
    spec: &PerturbationSpec<T>,
    x0: &[T],
    region: &HPolytope<T>,
    cfg: &AttentionConfig<T>,
) -> Result<RegionVerdict<T>> {
    let problem = Problem::from_parts(f.clone(), g_net.clone(), spec.clone(), x0.to_vec(), *cfg)?;
    let inside = region
        .feasible_interior_point(problem.eps)?
        .ok_or(Error::Infeasible)?;
    let p = problem.composite.activation_pattern(&inside)?;
    problem.verify(region.clone(), &p)
}

/// Labels and `ai` on a regular grid over Θ, computed by direct evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOracleResult<T> {
    pub resolution: usize,
    /// Sample points, last axis varying fastest.
    pub thetas: Vec<Vec<T>>,
    pub labels: Vec<usize>,
    pub ai_values: Vec<T>,
    pub original_label: usize,
}

impl<T: Scalar> GridOracleResult<T> {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

/// Regular grid of `resolution` points per axis covering `[lo, hi]` inclusively.
pub fn grid_points<T: Scalar>(lo: &[T], hi: &[T], resolution: usize) -> Vec<Vec<T>> {
    let n = lo.len();
    let total = resolution.pow(n as u32);
    let denom = T::from_usize(resolution - 1).expect("resolution");
    (0..total)
        .map(|mut k| {
            let mut theta = vec![T::zero(); n];
            for axis in (0..n).rev() {
                let i = k % resolution;
                k /= resolution;
                theta[axis] = if i == resolution - 1 {
                    hi[axis]
                } else {
                    lo[axis] + (hi[axis] - lo[axis]) * T::from_usize(i).expect("index") / denom
                };
            }
            theta
        })
        .collect()
}

pub fn grid_oracle<T: Scalar>(
    f: &Network<T>,
    spec: &PerturbationSpec<T>,
    x0: &[T],
    resolution: usize,
    cfg: &AttentionConfig<T>,
) -> Result<GridOracleResult<T>> {
    if resolution < 2 {
        return Err(Error::InvalidConfig("grid resolution must be at least 2".into()));
    }
    let meta = spec.image();
    let bx = spec.theta_box();
    let thetas = grid_points(bx.lo(), bx.hi(), resolution);
    let original_label = argmax(&f.forward(x0)?);
    let orig = maps_for_pattern(f, &f.activation_pattern(x0)?, cfg.filter, meta)?;
    let mut cache: HashMap<ActivationPattern, Vec<Vec<T>>> = HashMap::new();
    let mut labels = Vec::with_capacity(thetas.len());
    let mut ai_values = Vec::with_capacity(thetas.len());
    for theta in &thetas {
        let x = apply_direct(spec, theta, x0)?;
        let (logits, p) = f.forward_with_pattern(&x)?;
        labels.push(argmax(&logits));
        if !cache.contains_key(&p) {
            let maps = maps_for_pattern(f, &p, cfg.filter, meta)?;
            cache.insert(p.clone(), maps);
        }
        let maps = &cache[&p];
        let mut ai = T::zero();
        for (m, m0) in maps.iter().zip(&orig) {
            let expected = expected_map_transform(spec, m0, theta)?;
            ai = ai + cfg.dist.eval(m, &expected);
        }
        ai_values.push(ai);
    }
    Ok(GridOracleResult {
        resolution,
        thetas,
        labels,
        ai_values,
        original_label,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum MismatchKind<T> {
    /// A CR region containing a sample with another label, or an MR region
    /// containing a sample with the original label.
    Label { verdict: ClassVerdict, label: usize },
    Attention { ai: T, range: ValueRange<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch<T> {
    pub sample: usize,
    pub region: usize,
    pub kind: MismatchKind<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReconcileReport<T> {
    /// Samples strictly inside some region and checked against it.
    pub checked: usize,
    /// Samples within the boundary tolerance of a region, left unchecked.
    pub boundary: usize,
    /// Samples inside no region.
    pub uncovered: Vec<usize>,
    pub mismatches: Vec<Mismatch<T>>,
}

impl<T> ReconcileReport<T> {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Checks every oracle sample against the region containing it. Samples
/// closer than `boundary_tol` to a region's boundary are skipped.
pub fn reconcile<T: Scalar>(
    verdicts: &[RegionVerdict<T>],
    oracle: &GridOracleResult<T>,
    boundary_tol: T,
    ai_tol: T,
) -> Result<ReconcileReport<T>> {
    let parts: Vec<_> = verdicts
        .iter()
        .map(|v| (&v.region, v.cls_verdict, v.ai_range))
        .collect();
    reconcile_regions(&parts, oracle, boundary_tol, ai_tol)
}

/// [`reconcile`] on bare `(region, class verdict, ai range)` triples.
pub fn reconcile_regions<T: Scalar>(
    regions: &[(&HPolytope<T>, ClassVerdict, ValueRange<T>)],
    oracle: &GridOracleResult<T>,
    boundary_tol: T,
    ai_tol: T,
) -> Result<ReconcileReport<T>> {
    let mut bounds = Vec::with_capacity(regions.len());
    for (region, _, _) in regions {
        bounds.push(bounding_box(region)?);
    }
    let mut report = ReconcileReport {
        checked: 0,
        boundary: 0,
        uncovered: Vec::new(),
        mismatches: Vec::new(),
    };
    for (s, theta) in oracle.thetas.iter().enumerate() {
        let mut near = false;
        let mut hit = None;
        for (r, (region, _, _)) in regions.iter().enumerate() {
            let (lo, hi) = &bounds[r];
            if theta
                .iter()
                .zip(lo.iter().zip(hi))
                .any(|(&t, (&l, &h))| t < l - boundary_tol || t > h + boundary_tol)
            {
                continue;
            }
            let slack = region.min_slack(theta);
            if slack >= boundary_tol {
                hit = Some(r);
                break;
            }
            if slack >= -boundary_tol {
                near = true;
            }
        }
        match hit {
            Some(r) => {
                report.checked += 1;
                let (_, cls, range) = regions[r];
                let label = oracle.labels[s];
                let bad_label = match cls {
                    ClassVerdict::Cr => label != oracle.original_label,
                    ClassVerdict::Mr => label == oracle.original_label,
                    ClassVerdict::Cb => false,
                };
                if bad_label {
                    report.mismatches.push(Mismatch {
                        sample: s,
                        region: r,
                        kind: MismatchKind::Label {
                            verdict: cls,
                            label,
                        },
                    });
                }
                let ai = oracle.ai_values[s];
                if !range.contains(ai, ai_tol) {
                    report.mismatches.push(Mismatch {
                        sample: s,
                        region: r,
                        kind: MismatchKind::Attention { ai, range },
                    });
                }
            }
            None if near => report.boundary += 1,
            None => report.uncovered.push(s),
        }
    }
    Ok(report)
}

/// Axis-aligned bounds of a bounded polytope.
fn bounding_box<T: Scalar>(p: &HPolytope<T>) -> Result<(Vec<T>, Vec<T>)> {
    let n = p.dim();
    let mut lo = vec![T::zero(); n];
    let mut hi = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    for k in 0..n {
        e[k] = T::one();
        lo[k] = p.minimize_linear(&e)?.0;
        e[k] = -T::one();
        hi[k] = -p.minimize_linear(&e)?.0;
        e[k] = T::zero();
    }
    Ok((lo, hi))
}
