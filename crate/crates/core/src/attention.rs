//! Attention maps, the attention-inconsistency metric `ai`, and exact value
//! ranges of `ai` and classification margins over one activation region.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{ActivationPattern, AffineRestriction, Network};
use crate::perturb::{apply_direct, expected_map_affine, expected_map_transform, ImageMeta, PerturbationSpec};
use crate::polytope::HPolytope;
use crate::scalar::Scalar;

/// Post-processing applied to the input gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Filter {
    #[default]
    Identity,
    Absolute,
    /// 3×3 box mean, zero padded at the borders.
    Mean3x3,
}

impl Filter {
    pub fn apply<T: Scalar>(&self, grad: &[T], meta: ImageMeta) -> Vec<T> {
        match self {
            Filter::Identity => grad.to_vec(),
            Filter::Absolute => grad.iter().map(|v| v.abs()).collect(),
            Filter::Mean3x3 => {
                let (w, h) = (meta.width as i64, meta.height as i64);
                let ninth = T::one() / T::lit(9.0);
                let mut out = vec![T::zero(); grad.len()];
                for r in 0..h {
                    for c in 0..w {
                        let mut acc = T::zero();
                        for dr in -1..=1 {
                            for dc in -1..=1 {
                                let (rr, cc) = (r + dr, c + dc);
                                if (0..h).contains(&rr) && (0..w).contains(&cc) {
                                    acc = acc + grad[(rr * w + cc) as usize];
                                }
                            }
                        }
                        out[(r * w + c) as usize] = acc * ninth;
                    }
                }
                out
            }
        }
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Filter::Identity => "I",
            Filter::Absolute => "A",
            Filter::Mean3x3 => "M",
        })
    }
}

impl FromStr for Filter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" => Ok(Filter::Identity),
            "A" => Ok(Filter::Absolute),
            "M" => Ok(Filter::Mean3x3),
            other => Err(Error::InvalidConfig(format!("unknown filter `{other}` (expected I, A or M)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dist {
    L1,
    #[default]
    L2,
}

impl Dist {
    pub fn eval<T: Scalar>(&self, a: &[T], b: &[T]) -> T {
        let diffs = a.iter().zip(b).map(|(&x, &y)| x - y);
        match self {
            Dist::L1 => diffs.map(|d| d.abs()).sum(),
            Dist::L2 => diffs.map(|d| d * d).sum::<T>().sqrt(),
        }
    }
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dist::L1 => "L1",
            Dist::L2 => "L2",
        })
    }
}

impl FromStr for Dist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L1" => Ok(Dist::L1),
            "L2" => Ok(Dist::L2),
            other => Err(Error::InvalidConfig(format!("unknown distance `{other}` (expected L1 or L2)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig<T> {
    pub filter: Filter,
    pub dist: Dist,
    pub delta: T,
    pub w_delta: T,
}

impl<T: Scalar> Default for AttentionConfig<T> {
    fn default() -> Self {
        Self {
            filter: Filter::Identity,
            dist: Dist::L2,
            delta: T::lit(3.0),
            w_delta: T::lit(0.2),
        }
    }
}

impl<T: Scalar> AttentionConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= T::zero()) || !(self.w_delta >= T::zero()) {
            return Err(Error::InvalidConfig("delta and w_delta must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Filtered gradient of one class confidence, laid out like the image.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap<T> {
    pub values: Vec<T>,
    pub class_index: usize,
    pub meta: ImageMeta,
}

/// Closed interval `[lo, up]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueRange<T> {
    pub lo: T,
    pub up: T,
}

impl<T: Scalar> ValueRange<T> {
    /// Orders the endpoints if rounding swapped them.
    pub fn new(lo: T, up: T) -> Self {
        if lo <= up {
            Self { lo, up }
        } else {
            Self { lo: up, up: lo }
        }
    }

    pub fn point(v: T) -> Self {
        Self { lo: v, up: v }
    }

    pub fn contains(&self, v: T, tol: T) -> bool {
        v >= self.lo - tol && v <= self.up + tol
    }
}

fn check_meta<T>(f: &Network<T>, meta: ImageMeta) -> Result<()>
where
    T: Scalar,
{
    if f.input_dim() != meta.pixels() {
        return Err(Error::DimensionMismatch {
            context: "classifier input vs image",
            expected: meta.pixels(),
            got: f.input_dim(),
        });
    }
    Ok(())
}

fn warn_on_boundary<T: Scalar>(f: &Network<T>, x: &[T]) {
    let mut v = x.to_vec();
    for layer in f.layers() {
        let mut next: Vec<T> = (0..layer.out_dim())
            .map(|r| crate::scalar::dot(layer.row(r), &v) + layer.bias()[r])
            .collect();
        if layer.has_relu() {
            if next.iter().any(|z| *z == T::zero()) {
                tracing::warn!("input lies on an activation boundary; inactive convention applied");
                return;
            }
            next.iter_mut().for_each(|z| *z = z.max(T::zero()));
        }
        v = next;
    }
}

/// `filter(∂f_j/∂x)` at `x`.
pub fn saliency_map<T: Scalar>(
    f: &Network<T>,
    x: &[T],
    j: usize,
    filter: Filter,
    meta: ImageMeta,
) -> Result<AttentionMap<T>> {
    check_meta(f, meta)?;
    let p = f.activation_pattern(x)?;
    warn_on_boundary(f, x);
    let grad = f.gradient_in_region(&p, j)?;
    Ok(AttentionMap {
        values: filter.apply(&grad, meta),
        class_index: j,
        meta,
    })
}

/// Maps of every class at `x`.
pub fn saliency_maps<T: Scalar>(f: &Network<T>, x: &[T], filter: Filter, meta: ImageMeta) -> Result<Vec<AttentionMap<T>>> {
    check_meta(f, meta)?;
    let p = f.activation_pattern(x)?;
    warn_on_boundary(f, x);
    Ok(maps_for_pattern(f, &p, filter, meta)?
        .into_iter()
        .enumerate()
        .map(|(j, values)| AttentionMap {
            values,
            class_index: j,
            meta,
        })
        .collect())
}

/// Maps of every class anywhere in the classifier region of `p`.
pub fn maps_for_pattern<T: Scalar>(
    f: &Network<T>,
    p: &ActivationPattern,
    filter: Filter,
    meta: ImageMeta,
) -> Result<Vec<Vec<T>>> {
    check_meta(f, meta)?;
    let lin = f.affine_restriction(p)?;
    Ok((0..lin.output_dim()).map(|j| filter.apply(lin.row(j), meta)).collect())
}

/// `ai(θ, x0) = Σ_j dist(map_j(g(θ, x0)), g̃(θ, map_j(x0)))`.
pub fn attention_inconsistency<T: Scalar>(
    f: &Network<T>,
    spec: &PerturbationSpec<T>,
    x0: &[T],
    theta: &[T],
    cfg: &AttentionConfig<T>,
) -> Result<T> {
    let meta = spec.image();
    let x = apply_direct(spec, theta, x0)?;
    let now = saliency_maps(f, &x, cfg.filter, meta)?;
    let before = saliency_maps(f, x0, cfg.filter, meta)?;
    let mut total = T::zero();
    for (m, m0) in now.iter().zip(&before) {
        let expected = expected_map_transform(spec, &m0.values, theta)?;
        total = total + cfg.dist.eval(&m.values, &expected);
    }
    Ok(total)
}

/// Exact range of `ai` over `region`, a region of `f ∘ g_net`.
pub fn ai_range_in_region<T: Scalar>(
    f: &Network<T>,
    g_net: &Network<T>,
    spec: &PerturbationSpec<T>,
    x0: &[T],
    region: &HPolytope<T>,
    cfg: &AttentionConfig<T>,
) -> Result<ValueRange<T>> {
    let meta = spec.image();
    let inside = region
        .feasible_interior_point(T::default_eps())?
        .ok_or(Error::Infeasible)?;
    let x = g_net.forward(&inside)?;
    let p = f.activation_pattern(&x)?;
    let maps = maps_for_pattern(f, &p, cfg.filter, meta)?;
    let p0 = f.activation_pattern(x0)?;
    let orig = maps_for_pattern(f, &p0, cfg.filter, meta)?;
    ai_range_for_maps(spec, &maps, &orig, region, cfg.dist)
}

/// Range of `Σ_j dist(maps_j, g̃(θ, orig_j))` over `region`, with the current
/// maps held fixed.
///
/// `g̃` only depends on the translation parameter `t`, and is affine in it, so
/// the sum is a convex function of `t` alone. Its maximum sits at one end of
/// the `t`-interval of the region; the minimum is found in closed form (L1) or
/// by golden-section search (L2).
pub fn ai_range_for_maps<T: Scalar>(
    spec: &PerturbationSpec<T>,
    maps: &[Vec<T>],
    orig: &[Vec<T>],
    region: &HPolytope<T>,
    dist: Dist,
) -> Result<ValueRange<T>> {
    if maps.len() != orig.len() {
        return Err(Error::DimensionMismatch {
            context: "attention maps",
            expected: orig.len(),
            got: maps.len(),
        });
    }
    let (Some(k), Some(_)) = (spec.translation_index(), expected_map_affine(spec, &orig[0])) else {
        let v = maps.iter().zip(orig).map(|(m, m0)| dist.eval(m, m0)).sum();
        return Ok(ValueRange::point(v));
    };

    // Per class and pixel, current − expected = r − t·s.
    let mut r = Vec::new();
    let mut s = Vec::new();
    for (m, m0) in maps.iter().zip(orig) {
        let aff = expected_map_affine(spec, m0).expect("translation present");
        r.push(m.iter().zip(&aff).map(|(&mi, &(c, _))| mi - c).collect::<Vec<_>>());
        s.push(aff.iter().map(|&(_, sl)| sl).collect::<Vec<_>>());
    }
    let h = |t: T| -> T {
        r.iter()
            .zip(&s)
            .map(|(rj, sj)| {
                let d = rj.iter().zip(sj).map(|(&a, &b)| a - t * b);
                match dist {
                    Dist::L1 => d.map(|v| v.abs()).sum::<T>(),
                    Dist::L2 => d.map(|v| v * v).sum::<T>().sqrt(),
                }
            })
            .sum()
    };

    let mut e = vec![T::zero(); region.dim()];
    e[k] = T::one();
    let (t_lo, _) = region.minimize_linear(&e)?;
    e[k] = -T::one();
    let (neg_hi, _) = region.minimize_linear(&e)?;
    let t_hi = (-neg_hi).max(t_lo);
    let (h_lo, h_hi) = (h(t_lo), h(t_hi));
    let up = h_lo.max(h_hi);

    let t_star = match dist {
        Dist::L1 => weighted_median(&r, &s).map(|t| t.max(t_lo).min(t_hi)),
        Dist::L2 => Some(golden_section(&h, t_lo, t_hi)),
    };
    let lo = t_star.map_or(h_lo.min(h_hi), |t| h(t).min(h_lo).min(h_hi));
    Ok(ValueRange::new(lo, up))
}

/// Minimiser of `Σ |r_i − t·s_i| = Σ |s_i|·|t − r_i/s_i|` (terms with `s_i = 0`
/// are constant).
fn weighted_median<T: Scalar>(r: &[Vec<T>], s: &[Vec<T>]) -> Option<T> {
    let mut pts: Vec<(T, T)> = r
        .iter()
        .flatten()
        .zip(s.iter().flatten())
        .filter(|(_, &b)| b != T::zero())
        .map(|(&a, &b)| (a / b, b.abs()))
        .collect();
    if pts.is_empty() {
        return None;
    }
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let total: T = pts.iter().map(|p| p.1).sum();
    let half = total / T::lit(2.0);
    let mut acc = T::zero();
    for (t, w) in &pts {
        acc = acc + *w;
        if acc >= half {
            return Some(*t);
        }
    }
    pts.last().map(|p| p.0)
}

fn golden_section<T: Scalar>(h: &impl Fn(T) -> T, mut a: T, mut b: T) -> T {
    let inv_phi = T::lit(0.618_033_988_749_894_9);
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let (mut hc, mut hd) = (h(c), h(d));
    for _ in 0..200 {
        if b - a <= T::epsilon() * (T::one() + a.abs() + b.abs()) {
            break;
        }
        if hc <= hd {
            b = d;
            d = c;
            hd = hc;
            c = b - (b - a) * inv_phi;
            hc = h(c);
        } else {
            a = c;
            c = d;
            hc = hd;
            d = a + (b - a) * inv_phi;
            hd = h(d);
        }
    }
    if hc <= hd {
        c
    } else {
        d
    }
}

/// Exact range of `f_{j0} − f_j` over `region` of `composite`.
pub fn margin_range_in_region<T: Scalar>(
    composite: &Network<T>,
    region: &HPolytope<T>,
    j0: usize,
    j: usize,
) -> Result<ValueRange<T>> {
    let inside = region
        .feasible_interior_point(T::default_eps())?
        .ok_or(Error::Infeasible)?;
    let p = composite.activation_pattern(&inside)?;
    let lin = composite.affine_restriction(&p)?;
    margin_range_with(&lin, region, j0, j)
}

/// Margin form `(coefficients, constant)` of `f_{j0} − f_j` under `lin`.
pub fn margin_form<T: Scalar>(lin: &AffineRestriction<T>, j0: usize, j: usize) -> Result<(Vec<T>, T)> {
    for idx in [j0, j] {
        if idx >= lin.output_dim() {
            return Err(Error::IndexOutOfRange {
                what: "class",
                index: idx,
                len: lin.output_dim(),
            });
        }
    }
    let c = lin.row(j0).iter().zip(lin.row(j)).map(|(&a, &b)| a - b).collect();
    Ok((c, lin.bias()[j0] - lin.bias()[j]))
}

pub fn margin_range_with<T: Scalar>(
    lin: &AffineRestriction<T>,
    region: &HPolytope<T>,
    j0: usize,
    j: usize,
) -> Result<ValueRange<T>> {
    let (c, d) = margin_form(lin, j0, j)?;
    let (lo, _) = region.minimize_linear(&c)?;
    let neg: Vec<T> = c.iter().map(|&v| -v).collect();
    let (neg_up, _) = region.minimize_linear(&neg)?;
    Ok(ValueRange::new(lo + d, -neg_up + d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AffineLayer;
    use crate::perturb::{encode_with, Clipping, PerturbationKind};
    use crate::polytope::ThetaBox;

    fn worked_classifier() -> Network<f64> {
        Network::new(vec![AffineLayer::new(
            vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0]],
            vec![0.0; 2],
            true,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn filters() {
        let meta = ImageMeta::new(3, 3);
        let g: Vec<f64> = vec![-1.0, 2.0, 0.0, 0.0, 9.0, 0.0, 0.0, 0.0, -3.0];
        assert_eq!(Filter::Identity.apply(&g, meta), g);
        assert_eq!(Filter::Absolute.apply(&g, meta)[0], 1.0);
        let m = Filter::Mean3x3.apply(&g, meta);
        // center sees all nine, corner (0,0) sees its 2x2 block
        assert!((m[4] - 7.0 / 9.0).abs() < 1e-15);
        assert!((m[0] - 10.0 / 9.0).abs() < 1e-15);
        assert!((m[8] - 6.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn distances_agree_on_single_pixel() {
        let a = [0.0, 2.0, 1.0];
        let b = [0.0, 0.0, 1.0];
        assert_eq!(Dist::L1.eval(&a, &b), 2.0);
        assert_eq!(Dist::L2.eval(&a, &b), 2.0);
    }

    #[test]
    fn linear_net_maps_are_weight_rows() {
        let w = vec![vec![1.0, -2.0], vec![0.5, 3.0]];
        let f = Network::new(vec![AffineLayer::new(w.clone(), vec![0.0; 2], false).unwrap()]).unwrap();
        let meta = ImageMeta::new(2, 1);
        for (j, row) in w.iter().enumerate() {
            let m = saliency_map(&f, &[0.3, 0.7], j, Filter::Identity, meta).unwrap();
            assert_eq!(&m.values, row);
        }
    }

    #[test]
    fn worked_example_map() {
        let f = worked_classifier();
        let m = saliency_map(&f, &[0.4, 0.0, 0.0], 0, Filter::Identity, ImageMeta::new(3, 1)).unwrap();
        assert_eq!(m.values, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn worked_example_ai_and_margin() {
        let f = worked_classifier();
        let meta = ImageMeta::new(3, 1);
        let x0 = [1.0, 0.5, 0.1];
        let spec = PerturbationSpec::new(
            vec![PerturbationKind::Brightness],
            ThetaBox::new(vec![0.0], vec![1.0]).unwrap(),
            meta,
        )
        .unwrap();
        let cfg = AttentionConfig::default();
        for t in [0.0, 0.55, 0.6, 0.99] {
            assert_eq!(attention_inconsistency(&f, &spec, &x0, &[t], &cfg).unwrap(), 0.0);
        }
        let g = encode_with(&spec, &x0, Clipping::LowerOnly).unwrap();
        let comp = Network::compose(&f, &g).unwrap();
        let p = comp.activation_pattern(&[0.6]).unwrap();
        let mut region = comp.region_halfspaces(&p).unwrap();
        region.push_box(spec.theta_box());
        let ai = ai_range_in_region(&f, &g, &spec, &x0, &region, &cfg).unwrap();
        assert_eq!(ai, ValueRange::point(0.0));
        let mr = margin_range_in_region(&comp, &region, 0, 1).unwrap();
        assert!(mr.lo.abs() < 1e-12 && mr.up.abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_minimisers() {
        // |1 - t| + 2|0.5 - t|: weighted median at 0.5, value 0.5
        let r = vec![vec![1.0, 1.0]];
        let s = vec![vec![1.0, 2.0]];
        assert_eq!(weighted_median(&r, &s), Some(0.5));
        let h = |t: f64| (t - 0.3).powi(2) + 1.0;
        assert!((golden_section(&h, -1.0, 2.0) - 0.3).abs() < 1e-7);
        assert!((golden_section(&h, 0.5, 2.0) - 0.5).abs() < 1e-7);
    }

    #[test]
    fn ranges_are_ordered() {
        let v = ValueRange::new(2.0, 1.0);
        assert_eq!((v.lo, v.up), (1.0, 2.0));
        assert!(v.contains(1.5, 0.0));
        assert!(!v.contains(2.1, 1e-3));
    }
}
