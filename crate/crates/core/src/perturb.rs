//! Semantic perturbations (brightness, patch, translation) and their exact
//! encoding as ReLU networks from parameter space to image space.
//!
//! Pixel `i` of a `width × height` image sits at `(⌊i / width⌋, i mod width)`.
//! Patch geometry and translation offsets are expressed on those two axes: `px`
//! and `tx` act on the first (row) axis, `py` on the second.

use std::fmt;

use crate::error::{Error, Result};
use crate::nn::{AffineLayer, Network};
use crate::polytope::ThetaBox;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationKind {
    /// Subtracts `θ` from every pixel.
    Brightness,
    /// Adds `θ` to pixels inside the (inclusive) window.
    Patch {
        px: usize,
        py: usize,
        pw: usize,
        ph: usize,
    },
    /// Sub-pixel shift along the row axis. Output pixel `i` interpolates
    /// between the source offsets `tx − 1` (at `θ = 0`) and `tx − 2` rows
    /// (at `θ = 1`), with zeros outside the image.
    Translation { tx: i64 },
}

impl PerturbationKind {
    pub fn name(&self) -> &'static str {
        match self {
            PerturbationKind::Brightness => "brightness",
            PerturbationKind::Patch { .. } => "patch",
            PerturbationKind::Translation { .. } => "translate",
        }
    }

    /// Whether the expected attention map stays put under this atom.
    pub fn keeps_attention(&self) -> bool {
        !matches!(self, PerturbationKind::Translation { .. })
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationKind::Brightness => f.write_str("brightness"),
            PerturbationKind::Patch { px, py, pw, ph } => {
                write!(f, "patch:px={px},py={py},pw={pw},ph={ph}")
            }
            PerturbationKind::Translation { tx } => write!(f, "translate:tx={tx}"),
        }
    }
}

/// Grayscale image geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageMeta {
    pub width: usize,
    pub height: usize,
}

impl ImageMeta {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

/// Ordered atoms (applied first to last), one parameter each, and the box Θ.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec<T> {
    atoms: Vec<PerturbationKind>,
    theta_box: ThetaBox<T>,
    image: ImageMeta,
}

impl<T: Scalar> PerturbationSpec<T> {
    pub fn new(atoms: Vec<PerturbationKind>, theta_box: ThetaBox<T>, image: ImageMeta) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidPerturbation("no perturbation atoms".into()));
        }
        if atoms.len() != theta_box.dim() {
            return Err(Error::InvalidPerturbation(format!(
                "{} atoms but a {}-dimensional parameter box",
                atoms.len(),
                theta_box.dim()
            )));
        }
        if image.pixels() == 0 {
            return Err(Error::InvalidPerturbation("empty image".into()));
        }
        if !theta_box.contains(&vec![T::zero(); atoms.len()]) {
            return Err(Error::InvalidPerturbation(
                "parameter box must contain the unperturbed point 0".into(),
            ));
        }
        for (k, atom) in atoms.iter().enumerate() {
            match *atom {
                PerturbationKind::Brightness => {}
                PerturbationKind::Patch { px, py, pw, ph } => {
                    if px + pw >= image.height || py + ph >= image.width {
                        return Err(Error::InvalidPerturbation(format!(
                            "patch window ({px},{py})+({pw},{ph}) exceeds a {}x{} image",
                            image.width, image.height
                        )));
                    }
                }
                PerturbationKind::Translation { tx } => {
                    if tx.unsigned_abs() as usize >= image.height {
                        return Err(Error::InvalidPerturbation(format!(
                            "translation tx={tx} out of range for height {}",
                            image.height
                        )));
                    }
                    // The translation stage multiplies θ by differences of x0
                    // pixels, which is only affine when it acts on x0 itself.
                    if k != 0 {
                        return Err(Error::InvalidPerturbation(
                            "translation must be the first perturbation atom".into(),
                        ));
                    }
                }
            }
        }
        Ok(Self {
            atoms,
            theta_box,
            image,
        })
    }

    pub fn atoms(&self) -> &[PerturbationKind] {
        &self.atoms
    }

    pub fn theta_box(&self) -> &ThetaBox<T> {
        &self.theta_box
    }

    pub fn image(&self) -> ImageMeta {
        self.image
    }

    /// Number of parameters `N^g`.
    pub fn dim(&self) -> usize {
        self.atoms.len()
    }

    /// Index of the translation parameter, if any.
    pub fn translation_index(&self) -> Option<usize> {
        self.atoms
            .iter()
            .position(|a| matches!(a, PerturbationKind::Translation { .. }))
    }

    fn check_image(&self, x: &[T], what: &'static str) -> Result<()> {
        if x.len() != self.image.pixels() {
            return Err(Error::DimensionMismatch {
                context: what,
                expected: self.image.pixels(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_theta(&self, theta: &[T]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "perturbation parameters",
                expected: self.dim(),
                got: theta.len(),
            });
        }
        if !self.theta_box.contains(theta) {
            return Err(Error::ThetaOutOfBox);
        }
        Ok(())
    }
}

/// Whether pixel `i` lies inside a patch window (both ends inclusive).
fn patch_covers(meta: ImageMeta, (px, py, pw, ph): (usize, usize, usize, usize), i: usize) -> bool {
    let row = i / meta.width;
    let col = i % meta.width;
    (px..=px + pw).contains(&row) && (py..=py + ph).contains(&col)
}

/// Source pixels `(s(i), t(i))` of translated pixel `i`; `None` is outside
/// the image (zero padding).
fn translation_sources(meta: ImageMeta, tx: i64, i: usize) -> (Option<usize>, Option<usize>) {
    let n = meta.pixels() as i64;
    let w = meta.width as i64;
    let row = i as i64 / w;
    let col = i as i64 % w;
    let s = (row + tx - 1) * w + col;
    let t = (row + tx - 2) * w + col;
    let inside = |k: i64| (0..n).contains(&k).then_some(k as usize);
    (inside(s), inside(t))
}

/// Per-pixel `(constant, slope)` of the translated image as a function of θ.
fn translation_affine<T: Scalar>(meta: ImageMeta, tx: i64, x: &[T]) -> Vec<(T, T)> {
    (0..meta.pixels())
        .map(|i| {
            let (s, t) = translation_sources(meta, tx, i);
            let xs = s.map_or(T::zero(), |k| x[k]);
            let xt = t.map_or(T::zero(), |k| x[k]);
            (xs, xt - xs)
        })
        .collect()
}

/// Output clipping appended after the perturbation stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clipping {
    /// `min(1, max(0, ·))` via two ReLU layers.
    #[default]
    Saturate,
    /// Only `max(0, ·)`: the single-ReLU brightness form, used to reproduce
    /// small hand-worked examples.
    LowerOnly,
}

/// Encodes `θ ↦ g(θ, x0)` as a ReLU network over Θ.
pub fn encode<T: Scalar>(spec: &PerturbationSpec<T>, x0: &[T]) -> Result<Network<T>> {
    encode_with(spec, x0, Clipping::Saturate)
}

pub fn encode_with<T: Scalar>(
    spec: &PerturbationSpec<T>,
    x0: &[T],
    clipping: Clipping,
) -> Result<Network<T>> {
    spec.check_image(x0, "perturbed image")?;
    if x0.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
        return Err(Error::InvalidPerturbation("pixels must lie in [0, 1]".into()));
    }
    let n_pix = spec.image.pixels();
    let n_par = spec.dim();
    let mut layers = Vec::with_capacity(n_par + 3);

    // Stage k maps [θ_k, θ_{k+1}, .., x] to [θ_{k+1}, .., x'], consuming θ_k.
    // Stage 0 has only the parameters as input; x0 enters through the bias.
    for (k, atom) in spec.atoms.iter().enumerate() {
        let remaining = n_par - k;
        let in_dim = if k == 0 { n_par } else { remaining + n_pix };
        let out_dim = remaining - 1 + n_pix;
        let mut w = vec![T::zero(); out_dim * in_dim];
        let mut bias = vec![T::zero(); out_dim];
        // copy θ_{k+1..}
        for r in 0..remaining - 1 {
            w[r * in_dim + r + 1] = T::one();
        }
        let pix_row = |i: usize| remaining - 1 + i;
        let pix_col = |i: usize| remaining + i;
        match *atom {
            PerturbationKind::Translation { tx } => {
                debug_assert_eq!(k, 0);
                for (i, (c, slope)) in translation_affine(spec.image, tx, x0).into_iter().enumerate() {
                    w[pix_row(i) * in_dim] = slope;
                    bias[pix_row(i)] = c;
                }
            }
            PerturbationKind::Brightness | PerturbationKind::Patch { .. } => {
                for i in 0..n_pix {
                    let coef = match *atom {
                        PerturbationKind::Brightness => -T::one(),
                        PerturbationKind::Patch { px, py, pw, ph } => {
                            if patch_covers(spec.image, (px, py, pw, ph), i) {
                                T::one()
                            } else {
                                T::zero()
                            }
                        }
                        PerturbationKind::Translation { .. } => unreachable!(),
                    };
                    w[pix_row(i) * in_dim] = coef;
                    if k == 0 {
                        bias[pix_row(i)] = x0[i];
                    } else {
                        w[pix_row(i) * in_dim + pix_col(i)] = T::one();
                    }
                }
            }
        }
        layers.push(AffineLayer::from_row_major(out_dim, in_dim, w, bias, false)?);
    }

    // max(0, x)
    layers.push(diagonal(n_pix, T::one(), T::zero(), true)?);
    if clipping == Clipping::Saturate {
        // 1 - max(0, 1 - max(0, x)) = min(1, max(0, x))
        layers.push(diagonal(n_pix, -T::one(), T::one(), true)?);
        layers.push(diagonal(n_pix, -T::one(), T::one(), false)?);
    }
    Network::new(layers)
}

/// `scale·I` with bias `offset`.
fn diagonal<T: Scalar>(n: usize, scale: T, offset: T, relu: bool) -> Result<AffineLayer<T>> {
    let mut w = vec![T::zero(); n * n];
    for i in 0..n {
        w[i * n + i] = scale;
    }
    AffineLayer::from_row_major(n, n, w, vec![offset; n], relu)
}

/// Reference semantics of the perturbation, evaluated pixel by pixel.
pub fn apply_direct<T: Scalar>(spec: &PerturbationSpec<T>, theta: &[T], x0: &[T]) -> Result<Vec<T>> {
    spec.check_theta(theta)?;
    spec.check_image(x0, "perturbed image")?;
    let mut x = x0.to_vec();
    for (atom, &t) in spec.atoms.iter().zip(theta) {
        match *atom {
            PerturbationKind::Brightness => x.iter_mut().for_each(|v| *v = *v - t),
            PerturbationKind::Patch { px, py, pw, ph } => {
                for (i, v) in x.iter_mut().enumerate() {
                    if patch_covers(spec.image, (px, py, pw, ph), i) {
                        *v = *v + t;
                    }
                }
            }
            PerturbationKind::Translation { tx } => x = translate(spec.image, tx, &x, t),
        }
    }
    x.iter_mut().for_each(|v| *v = v.max(T::zero()).min(T::one()));
    Ok(x)
}

fn translate<T: Scalar>(meta: ImageMeta, tx: i64, x: &[T], t: T) -> Vec<T> {
    translation_affine(meta, tx, x)
        .into_iter()
        .map(|(c, slope)| c + t * slope)
        .collect()
}

/// Expected transform `g̃(θ, m)` of an attention map: maps follow translations
/// and stay put under brightness and patch changes. No clamping.
pub fn expected_map_transform<T: Scalar>(spec: &PerturbationSpec<T>, m: &[T], theta: &[T]) -> Result<Vec<T>> {
    spec.check_image(m, "attention map")?;
    if theta.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            context: "perturbation parameters",
            expected: spec.dim(),
            got: theta.len(),
        });
    }
    let mut out = m.to_vec();
    for (atom, &t) in spec.atoms.iter().zip(theta) {
        if let PerturbationKind::Translation { tx } = *atom {
            out = translate(spec.image, tx, &out, t);
        }
    }
    Ok(out)
}

/// `(constant, slope)` per pixel of `g̃(θ, m)` along the translation
/// parameter, or `None` when the spec keeps attention maps fixed.
pub(crate) fn expected_map_affine<T: Scalar>(spec: &PerturbationSpec<T>, m: &[T]) -> Option<Vec<(T, T)>> {
    match spec.atoms.iter().find_map(|a| match *a {
        PerturbationKind::Translation { tx } => Some(tx),
        _ => None,
    }) {
        Some(tx) => Some(translation_affine(spec.image, tx, m)),
        None => None,
    }
}
