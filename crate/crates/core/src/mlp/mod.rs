//! Feedforward ReLU network.
//!
//! Hidden layers use ReLU, the output layer is the identity. Every dense
//! product goes through [`dot`], which accumulates in a fixed order, so a
//! batched forward pass is bit-identical to evaluating each row on its own.

mod adam;
mod grad;
mod margin;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use adam::{Adam, AdamState};
pub use grad::Gradient;
pub use margin::MarginNet;

/// Dense row-major matrix of `rows` samples with `cols` features each.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Error::check_dim(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            Error::check_dim(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a zero-width matrix still has rows.
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }
}

/// Fixed-order dot product with four interleaved accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Layer widths, input first and output last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        let spec = Self { layer_sizes };
        spec.validate()?;
        Ok(spec)
    }

    /// 13 → 64 → 64 → `n_actions`.
    pub fn actor(n_actions: usize) -> Self {
        Self { layer_sizes: vec![13, 64, 64, n_actions] }
    }

    /// 13 → 64 → 64 → 1.
    pub fn critic() -> Self {
        Self { layer_sizes: vec![13, 64, 64, 1] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::invalid("an MLP needs at least an input and an output layer"));
        }
        if self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }
}

/// One affine map. `weights` is `n_out × n_in`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, weights: vec![0.0; n_in * n_out], biases: vec![0.0; n_out] }
    }

    #[inline]
    pub fn weight_row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.n_in..(o + 1) * self.n_in]
    }

    #[inline]
    fn apply(&self, input: &[f64], out: &mut Vec<f64>, relu: bool) {
        out.clear();
        for o in 0..self.n_out {
            let z = dot(self.weight_row(o), input) + self.biases[o];
            out.push(if relu { relu_f(z) } else { z });
        }
    }
}

#[inline]
fn relu_f(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Feedforward network with ReLU hidden layers and an identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

/// Activations recorded by [`Mlp::forward_cached`] for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input fed to layer `l`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every layer; the last one is the network output.
    preacts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.preacts.last().expect("non-empty network")
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: rand::Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let limit = (6.0 / (n_in + n_out) as f64).sqrt();
                let weights = (0..n_in * n_out).map(|_| rng.random_range(-limit..=limit)).collect();
                Layer { n_in, n_out, weights, biases: vec![0.0; n_out] }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec.layer_sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self { spec, layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::invalid("no layers"))?;
        let mut sizes = vec![first.n_in];
        for l in &layers {
            Error::check_dim(*sizes.last().unwrap(), l.n_in)?;
            Error::check_dim(l.n_in * l.n_out, l.weights.len())?;
            Error::check_dim(l.n_out, l.biases.len())?;
            sizes.push(l.n_out);
        }
        let net = Self { spec: MlpSpec::new(sizes)?, layers };
        net.check_finite()?;
        Ok(net)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        let ok = self
            .layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()));
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite("network parameters".into()))
        }
    }

    /// Shared row kernel; `a` and `b` are scratch buffers.
    fn forward_row<'a>(&self, x: &[f64], a: &'a mut Vec<f64>, b: &'a mut Vec<f64>) -> &'a [f64] {
        let last = self.layers.len() - 1;
        let mut src_is_a = false;
        for (i, layer) in self.layers.iter().enumerate() {
            let relu = i != last;
            if i == 0 {
                layer.apply(x, a, relu);
                src_is_a = true;
            } else if src_is_a {
                layer.apply(a, b, relu);
                src_is_a = false;
            } else {
                layer.apply(b, a, relu);
                src_is_a = true;
            }
        }
        if src_is_a {
            a
        } else {
            b
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.input_dim(), input.len())?;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        Ok(self.forward_row(input, &mut a, &mut b).to_vec())
    }

    pub fn forward_batch(&self, inputs: &Matrix) -> Result<Matrix> {
        if inputs.rows() > 0 {
            Error::check_dim(self.input_dim(), inputs.cols())?;
        }
        let mut out = Matrix::zeros(inputs.rows(), self.output_dim());
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, x) in inputs.iter_rows().enumerate() {
            out.row_mut(i).copy_from_slice(self.forward_row(x, &mut a, &mut b));
        }
        Ok(out)
    }

    /// Calls `f(row_index, output)` for each input row without materialising
    /// the output matrix.
    pub fn for_each_output(&self, inputs: &Matrix, mut f: impl FnMut(usize, &[f64])) -> Result<()> {
        if inputs.rows() > 0 {
            Error::check_dim(self.input_dim(), inputs.cols())?;
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, x) in inputs.iter_rows().enumerate() {
            f(i, self.forward_row(x, &mut a, &mut b));
        }
        Ok(())
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        Error::check_dim(self.input_dim(), input.len())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.n_out);
            layer.apply(&x, &mut z, false);
            let next = if i == last { Vec::new() } else { z.iter().map(|&v| relu_f(v)).collect() };
            inputs.push(std::mem::replace(&mut x, next));
            preacts.push(z);
        }
        Ok(ForwardCache { inputs, preacts })
    }

    /// Gradient of a scalar loss given its gradient at the network output.
    pub fn backward(&self, input: &[f64], loss_grad: &[f64]) -> Result<Gradient> {
        let cache = self.forward_cached(input)?;
        let mut grad = Gradient::zeros_like(self);
        self.backward_cached(&cache, loss_grad, &mut grad)?;
        Ok(grad)
    }

    /// Accumulates into `grad`. The ReLU derivative at exactly zero is zero.
    pub fn backward_cached(&self, cache: &ForwardCache, loss_grad: &[f64], grad: &mut Gradient) -> Result<()> {
        Error::check_dim(self.output_dim(), loss_grad.len())?;
        Error::check_dim(self.layers.len(), cache.preacts.len())?;
        let mut delta = loss_grad.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let x = &cache.inputs[l];
            let gw = &mut grad.weights[l];
            let gb = &mut grad.biases[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, &xi) in gw[o * layer.n_in..(o + 1) * layer.n_in].iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if l > 0 {
                let z_prev = &cache.preacts[l - 1];
                let mut prev = vec![0.0; layer.n_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (p, &w) in prev.iter_mut().zip(layer.weight_row(o)) {
                        *p += d * w;
                    }
                }
                for (p, &z) in prev.iter_mut().zip(z_prev) {
                    if z <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok(())
    }

    /// `self ← tau·other + (1 − tau)·self`.
    pub fn soft_update_from(&mut self, other: &Mlp, tau: f64) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::invalid("soft update between networks of different shape"));
        }
        if tau == 1.0 {
            self.layers.clone_from(&other.layers);
            return Ok(());
        }
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            for (d, s) in dst.weights.iter_mut().zip(&src.weights).chain(dst.biases.iter_mut().zip(&src.biases)) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            layer_sizes: self.spec.layer_sizes.clone(),
            layers: self.layers.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("unexpected checkpoint format {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", ck.version)));
        }
        let net = Self::from_layers(ck.layers).map_err(|e| Error::Format(e.to_string()))?;
        if net.spec.layer_sizes != ck.layer_sizes {
            return Err(Error::Format("layer_sizes disagree with layer shapes".into()));
        }
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_checkpoint()).expect("checkpoint serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_checkpoint(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

const CHECKPOINT_FORMAT: &str = "approxviol-mlp";
const CHECKPOINT_VERSION: u32 = 1;

/// On-disk network: JSON with shortest round-trip float formatting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<Layer>,
}
