//! Piecewise-affine ReLU networks, activation patterns and the exact affine
//! form of a network on one activation region.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::polytope::{HPolytope, RowLabel};
use crate::scalar::Scalar;

/// A dense affine layer `W x + b`, optionally followed by a ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer<T> {
    weights: Vec<T>,
    bias: Vec<T>,
    in_dim: usize,
    relu: bool,
}

impl<T: Scalar> AffineLayer<T> {
    /// Builds a layer from weight rows (`out_dim` rows of length `in_dim`).
    pub fn new(rows: Vec<Vec<T>>, bias: Vec<T>, relu: bool) -> Result<Self> {
        let in_dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != in_dim) {
            return Err(Error::InvalidNetwork("ragged weight matrix".into()));
        }
        let out_dim = rows.len();
        Self::from_row_major(out_dim, in_dim, rows.into_iter().flatten().collect(), bias, relu)
    }

    pub fn from_row_major(
        out_dim: usize,
        in_dim: usize,
        weights: Vec<T>,
        bias: Vec<T>,
        relu: bool,
    ) -> Result<Self> {
        if out_dim == 0 || in_dim == 0 {
            return Err(Error::InvalidNetwork("layer with zero width".into()));
        }
        if weights.len() != out_dim * in_dim {
            return Err(Error::DimensionMismatch {
                context: "layer weights",
                expected: out_dim * in_dim,
                got: weights.len(),
            });
        }
        if bias.len() != out_dim {
            return Err(Error::DimensionMismatch {
                context: "layer bias",
                expected: out_dim,
                got: bias.len(),
            });
        }
        Ok(Self {
            weights,
            bias,
            in_dim,
            relu,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![T::zero(); dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = T::one();
        }
        Self {
            weights,
            bias: vec![T::zero(); dim],
            in_dim: dim,
            relu: false,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn has_relu(&self) -> bool {
        self.relu
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    /// Row-major weights, `out_dim * in_dim` entries.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.weights[i * self.in_dim..(i + 1) * self.in_dim]
    }

    /// Pre-activation `W x + b`.
    fn pre_activation(&self, x: &[T]) -> Vec<T> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &v)| acc + w * v))
            .collect()
    }
}

/// Identity token tying activation patterns to the network that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetworkId(u64);

impl NetworkId {
    fn fresh() -> Self {
        static NEXT: AtomicU64 = AtomicU64::new(1);
        NetworkId(NEXT.fetch_add(1, Ordering::Relaxed))
    }
}

/// Position of a ReLU neuron: `layer` counts ReLU layers only, both indices
/// are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NeuronId {
    pub layer: usize,
    pub neuron: usize,
}

impl NeuronId {
    pub const fn new(layer: usize, neuron: usize) -> Self {
        Self { layer, neuron }
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.layer, self.neuron)
    }
}

/// Feed-forward network of affine layers with optional ReLU activations.
#[derive(Debug, Clone)]
pub struct Network<T> {
    layers: Vec<AffineLayer<T>>,
    relu_shape: Arc<[usize]>,
    id: NetworkId,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<AffineLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("network has no layers".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::InvalidNetwork(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    k,
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        let relu_shape = layers
            .iter()
            .filter(|l| l.relu)
            .map(AffineLayer::out_dim)
            .collect();
        Ok(Self {
            layers,
            relu_shape,
            id: NetworkId::fresh(),
        })
    }

    pub fn layers(&self) -> &[AffineLayer<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn id(&self) -> NetworkId {
        self.id
    }

    /// Neuron count of each ReLU layer.
    pub fn relu_shape(&self) -> &[usize] {
        &self.relu_shape
    }

    pub fn relu_neuron_count(&self) -> usize {
        self.relu_shape.iter().sum()
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut v = x.to_vec();
        for layer in &self.layers {
            v = layer.pre_activation(&v);
            if layer.relu {
                v.iter_mut().for_each(|z| *z = z.max(T::zero()));
            }
        }
        Ok(v)
    }

    /// Evaluates the network and records which ReLU neurons fire.
    ///
    /// A pre-activation of exactly zero counts as inactive.
    pub fn activation_pattern(&self, x: &[T]) -> Result<ActivationPattern> {
        Ok(self.forward_with_pattern(x)?.1)
    }

    pub fn forward_with_pattern(&self, x: &[T]) -> Result<(Vec<T>, ActivationPattern)> {
        self.check_input(x)?;
        let mut bits = Vec::with_capacity(self.relu_neuron_count());
        let mut v = x.to_vec();
        for layer in &self.layers {
            v = layer.pre_activation(&v);
            if layer.relu {
                for z in v.iter_mut() {
                    let on = *z > T::zero();
                    bits.push(on);
                    if !on {
                        *z = T::zero();
                    }
                }
            }
        }
        Ok((v, self.pattern_from_bits_unchecked(bits)))
    }

    /// Wraps raw bits (layer-major) as a pattern of this network.
    pub fn pattern_from_bits(&self, bits: Vec<bool>) -> Result<ActivationPattern> {
        if bits.len() != self.relu_neuron_count() {
            return Err(Error::DimensionMismatch {
                context: "activation pattern",
                expected: self.relu_neuron_count(),
                got: bits.len(),
            });
        }
        Ok(self.pattern_from_bits_unchecked(bits))
    }

    fn pattern_from_bits_unchecked(&self, bits: Vec<bool>) -> ActivationPattern {
        ActivationPattern {
            bits: bits.into(),
            shape: Arc::clone(&self.relu_shape),
            network: self.id,
        }
    }

    fn check_pattern(&self, p: &ActivationPattern) -> Result<()> {
        if p.network != self.id || *p.shape != *self.relu_shape {
            return Err(Error::PatternMismatch);
        }
        Ok(())
    }

    /// Walks the network with every ReLU fixed by `p`, tracking the affine
    /// map from the input. `on_neuron` sees each ReLU neuron's pre-activation
    /// as an affine form `(coefficients, constant)` of the input.
    fn propagate_fixed(
        &self,
        p: &ActivationPattern,
        mut on_neuron: impl FnMut(NeuronId, &[T], T),
    ) -> AffineRestriction<T> {
        let d = self.input_dim();
        // Affine map input -> current activations, row-major (width x d).
        let mut lin = vec![T::zero(); d * d];
        for i in 0..d {
            lin[i * d + i] = T::one();
        }
        let mut off = vec![T::zero(); d];
        let mut relu_layer = 0;
        let mut bit = 0;
        for layer in &self.layers {
            let out = layer.out_dim();
            let mut next_lin = vec![T::zero(); out * d];
            let mut next_off = layer.bias.clone();
            for r in 0..out {
                let w = layer.row(r);
                let dst = &mut next_lin[r * d..(r + 1) * d];
                for (k, &wk) in w.iter().enumerate() {
                    if wk == T::zero() {
                        continue;
                    }
                    let src = &lin[k * d..(k + 1) * d];
                    for (o, &s) in dst.iter_mut().zip(src) {
                        *o = *o + wk * s;
                    }
                    next_off[r] = next_off[r] + wk * off[k];
                }
            }
            if layer.relu {
                for r in 0..out {
                    on_neuron(
                        NeuronId::new(relu_layer, r),
                        &next_lin[r * d..(r + 1) * d],
                        next_off[r],
                    );
                    if !p.bits[bit] {
                        next_lin[r * d..(r + 1) * d].fill(T::zero());
                        next_off[r] = T::zero();
                    }
                    bit += 1;
                }
                relu_layer += 1;
            }
            lin = next_lin;
            off = next_off;
        }
        AffineRestriction {
            a: lin,
            b: off,
            input_dim: d,
        }
    }

    /// Exact affine form `A' x + b'` of the network on the region of `p`.
    pub fn affine_restriction(&self, p: &ActivationPattern) -> Result<AffineRestriction<T>> {
        self.check_pattern(p)?;
        Ok(self.propagate_fixed(p, |_, _, _| {}))
    }

    /// H-representation of the activation region of `p`: one half-space per
    /// ReLU neuron, oriented so that the neuron's bit holds.
    pub fn region_halfspaces(&self, p: &ActivationPattern) -> Result<HPolytope<T>> {
        self.check_pattern(p)?;
        let mut poly = HPolytope::empty(self.input_dim());
        let mut bit = 0;
        self.propagate_fixed(p, |id, coeffs, constant| {
            // active: pre >= 0  <=>  -a x <= c ; inactive: pre <= 0  <=>  a x <= -c
            if p.bits[bit] {
                let row: Vec<T> = coeffs.iter().map(|&v| -v).collect();
                poly.push_row(&row, constant, RowLabel::Neuron(id));
            } else {
                poly.push_row(coeffs, -constant, RowLabel::Neuron(id));
            }
            bit += 1;
        });
        Ok(poly)
    }

    /// Constant gradient of output `j` over the region of `p`.
    pub fn gradient_in_region(&self, p: &ActivationPattern, j: usize) -> Result<Vec<T>> {
        if j >= self.output_dim() {
            return Err(Error::IndexOutOfRange {
                what: "class",
                index: j,
                len: self.output_dim(),
            });
        }
        Ok(self.affine_restriction(p)?.row(j).to_vec())
    }

    /// `outer ∘ inner`: layers of `inner` followed by layers of `outer`.
    pub fn compose(outer: &Network<T>, inner: &Network<T>) -> Result<Network<T>> {
        if inner.output_dim() != outer.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "composition",
                expected: outer.input_dim(),
                got: inner.output_dim(),
            });
        }
        let layers = inner
            .layers
            .iter()
            .chain(outer.layers.iter())
            .cloned()
            .collect();
        Network::new(layers)
    }
}

/// `A' x + b'`, the network restricted to one activation region.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineRestriction<T> {
    a: Vec<T>,
    b: Vec<T>,
    input_dim: usize,
}

impl<T: Scalar> AffineRestriction<T> {
    pub fn output_dim(&self) -> usize {
        self.b.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn row(&self, j: usize) -> &[T] {
        &self.a[j * self.input_dim..(j + 1) * self.input_dim]
    }

    pub fn bias(&self) -> &[T] {
        &self.b
    }

    pub fn eval(&self, x: &[T]) -> Vec<T> {
        (0..self.output_dim())
            .map(|j| {
                self.row(j)
                    .iter()
                    .zip(x)
                    .fold(self.b[j], |acc, (&a, &v)| acc + a * v)
            })
            .collect()
    }
}

/// On/off status of every ReLU neuron, layer-major.
#[derive(Debug, Clone)]
pub struct ActivationPattern {
    bits: Box<[bool]>,
    shape: Arc<[usize]>,
    network: NetworkId,
}

impl ActivationPattern {
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn network_id(&self) -> NetworkId {
        self.network
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    fn flat_index(&self, id: NeuronId) -> Result<usize> {
        let width = *self.shape.get(id.layer).ok_or(Error::IndexOutOfRange {
            what: "ReLU layer",
            index: id.layer,
            len: self.shape.len(),
        })?;
        if id.neuron >= width {
            return Err(Error::IndexOutOfRange {
                what: "neuron",
                index: id.neuron,
                len: width,
            });
        }
        Ok(self.shape[..id.layer].iter().sum::<usize>() + id.neuron)
    }

    pub fn get(&self, id: NeuronId) -> Result<bool> {
        Ok(self.bits[self.flat_index(id)?])
    }

    /// Copy of the pattern with neuron `id` inverted.
    pub fn flip(&self, id: NeuronId) -> Result<Self> {
        let k = self.flat_index(id)?;
        let mut bits = self.bits.clone();
        bits[k] = !bits[k];
        Ok(Self {
            bits,
            shape: Arc::clone(&self.shape),
            network: self.network,
        })
    }

    /// Neuron id for every flat position, layer-major.
    pub fn neuron_ids(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.shape
            .iter()
            .enumerate()
            .flat_map(|(l, &w)| (0..w).map(move |n| NeuronId::new(l, n)))
    }

    /// Bits of the ReLU layers from `first_layer` on, as a standalone pattern
    /// of `net` (used to recover the classifier's part of a composite pattern).
    pub fn suffix_for<T: Scalar>(
        &self,
        first_layer: usize,
        net: &Network<T>,
    ) -> Result<ActivationPattern> {
        if first_layer > self.shape.len() || self.shape[first_layer..] != *net.relu_shape() {
            return Err(Error::PatternMismatch);
        }
        let start: usize = self.shape[..first_layer].iter().sum();
        net.pattern_from_bits(self.bits[start..].to_vec())
    }
}

impl PartialEq for ActivationPattern {
    fn eq(&self, other: &Self) -> bool {
        self.bits == other.bits
    }
}

impl Eq for ActivationPattern {}

impl Hash for ActivationPattern {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.bits.hash(state);
    }
}

impl PartialOrd for ActivationPattern {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Lexicographic over the layer-major bit sequence, `0 < 1`.
impl Ord for ActivationPattern {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.bits.cmp(&other.bits)
    }
}

impl fmt::Display for ActivationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        let mut k = 0;
        for (l, &w) in self.shape.iter().enumerate() {
            if l > 0 {
                f.write_str("|")?;
            }
            for n in 0..w {
                if n > 0 {
                    f.write_str(",")?;
                }
                f.write_str(if self.bits[k] { "1" } else { "0" })?;
                k += 1;
            }
        }
        f.write_str("]")
    }
}
