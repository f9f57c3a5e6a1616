//! Dense network engine.
//!
//! A [`Mlp`] is a chain of affine layers, each followed by an element-wise
//! activation; the last layer is always identity so the network emits logits.
//! [`Mlp::forward`] keeps a [`ForwardTrace`] so one forward pass can serve a
//! reverse pass for parameter gradients, input gradients, or both.
//!
//! Backward passes compute the gradient of `<cotangent, logits>`, i.e. a
//! vector-Jacobian product. Any scalar loss of the logits is handled by
//! passing its gradient with respect to the logits as the cotangent.
//!
//! ReLU uses subgradient 0 at a pre-activation of exactly 0.

use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::tensor::Tensor;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Probabilities below this are clamped before taking the log in
/// [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
        }
    }
}

/// One affine layer `activation(W x + b)`; `W` is `[rows × cols]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    rows: usize,
    cols: usize,
    activation: Activation,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    pub fn new(
        rows: usize,
        cols: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::contract("layer dimensions must be positive"));
        }
        if weights.len() != rows * cols {
            return Err(Error::shape("layer weights", rows * cols, weights.len()));
        }
        if bias.len() != rows {
            return Err(Error::shape("layer bias", rows, bias.len()));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer parameters".into()));
        }
        Ok(Self {
            rows,
            cols,
            activation,
            weights,
            bias,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    #[inline]
    fn affine_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.cols)
                .zip(&self.bias)
                .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi)),
        );
    }
}

/// Per-layer values retained by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `inputs[k]` is the input fed to layer `k` (so `inputs[0]` is `x`).
    inputs: Vec<Vec<f64>>,
    /// `pre[k]` is layer `k`'s pre-activation `W x + b`.
    pre: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn depth(&self) -> usize {
        self.pre.len()
    }

    pub fn input(&self) -> &[f64] {
        &self.inputs[0]
    }

    pub fn pre_activation(&self, layer: usize) -> &[f64] {
        &self.pre[layer]
    }

    /// Logits of the traced pass (the last pre-activation; the output layer is identity).
    pub fn logits(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Gradient buffers shaped like an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros_like(model: &Mlp) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|x| *x *= s);
        }
    }

    /// Flattened view in the same order as [`Mlp::param`].
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }
}

/// Fully-connected network `f_θ: R^d → R^c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// Validates that layer widths chain and that the output layer is identity.
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::contract("a model needs at least one layer"));
        };
        if last.activation != Activation::Identity {
            return Err(Error::contract("final layer must use identity activation"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].rows != pair[1].cols {
                return Err(Error::shape(
                    format!("layer {} input", k + 1),
                    pair[0].rows,
                    pair[1].cols,
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Randomly initialised network with widths `dims = [d, h1, .., c]`.
    ///
    /// Hidden layers use `hidden` activation with He-uniform weights; the output
    /// layer uses Xavier-uniform weights. Biases start at zero.
    pub fn init(seed: u64, dims: &[usize], hidden: Activation) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::contract(format!("invalid layer widths {dims:?}")));
        }
        let mut rng = rng_from_seed(derive_seed(seed, &[stream::MODEL_INIT]));
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let last = k + 1 == n;
                let limit = if last {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                } else {
                    (6.0 / fan_in as f64).sqrt()
                };
                let dist = Uniform::new_inclusive(-limit, limit);
                let weights = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
                let act = if last { Activation::Identity } else { hidden };
                Dense::new(fan_out, fan_in, weights, vec![0.0; fan_out], act)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows
    }

    /// Layer widths `[d, h1, .., c]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.rows))
            .collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("layer 0 input", self.input_dim(), x.len()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardTrace)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        for layer in &self.layers {
            let mut z = Vec::with_capacity(layer.rows);
            layer.affine_into(&current, &mut z);
            let next = match layer.activation {
                Activation::Identity => z.clone(),
                act => z.iter().map(|&v| act.apply(v)).collect(),
            };
            inputs.push(std::mem::replace(&mut current, next));
            pre.push(z);
        }
        Ok((current, ForwardTrace { inputs, pre }))
    }

    /// Forward pass without keeping a trace.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut current = x.to_vec();
        let mut z = Vec::new();
        for layer in &self.layers {
            layer.affine_into(&current, &mut z);
            for v in &mut z {
                *v = layer.activation.apply(*v);
            }
            std::mem::swap(&mut current, &mut z);
        }
        Ok(current)
    }

    /// Row-wise forward over an `[n, d]` matrix, returning `[n, c]` logits.
    pub fn forward_batch(&self, xs: &Tensor) -> Result<Tensor> {
        if xs.shape().len() != 2 {
            return Err(Error::contract("batched forward expects a 2-D tensor"));
        }
        let mut out = Vec::with_capacity(xs.rows() * self.output_dim());
        for row in xs.row_iter() {
            out.extend(self.logits(row)?);
        }
        Tensor::new(vec![xs.rows(), self.output_dim()], out)
    }

    /// Predicted class: argmax of the logits, ties going to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    fn check_trace(&self, trace: &ForwardTrace, cotangent: &[f64]) -> Result<()> {
        if trace.pre.len() != self.layers.len() {
            return Err(Error::shape("trace depth", self.layers.len(), trace.pre.len()));
        }
        for (k, (layer, (inp, z))) in self
            .layers
            .iter()
            .zip(trace.inputs.iter().zip(&trace.pre))
            .enumerate()
        {
            if inp.len() != layer.cols {
                return Err(Error::shape(format!("trace layer {k} input"), layer.cols, inp.len()));
            }
            if z.len() != layer.rows {
                return Err(Error::shape(format!("trace layer {k} output"), layer.rows, z.len()));
            }
        }
        if cotangent.len() != self.output_dim() {
            return Err(Error::shape("cotangent", self.output_dim(), cotangent.len()));
        }
        Ok(())
    }

    /// Reverse pass. Adds parameter gradients into `params` when given and
    /// returns the input gradient when `want_input` is set.
    fn backward(
        &self,
        trace: &ForwardTrace,
        cotangent: &[f64],
        mut params: Option<&mut ParamGrads>,
        want_input: bool,
    ) -> Result<Option<Vec<f64>>> {
        self.check_trace(trace, cotangent)?;
        let mut delta = cotangent.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if layer.activation == Activation::Relu {
                for (d, &z) in delta.iter_mut().zip(&trace.pre[k]) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            if let Some(grads) = params.as_deref_mut() {
                let g = &mut grads.layers[k];
                let input = &trace.inputs[k];
                for ((row, gb), &d) in g
                    .weights
                    .chunks_exact_mut(layer.cols)
                    .zip(g.bias.iter_mut())
                    .zip(&delta)
                {
                    *gb += d;
                    if d != 0.0 {
                        row.iter_mut().zip(input).for_each(|(gw, xi)| *gw += d * xi);
                    }
                }
            }
            if k == 0 && !want_input {
                return Ok(None);
            }
            let mut prev = vec![0.0; layer.cols];
            for (row, &d) in layer.weights.chunks_exact(layer.cols).zip(&delta) {
                if d != 0.0 {
                    prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                }
            }
            delta = prev;
        }
        Ok(Some(delta))
    }

    /// Gradient of `<cotangent, logits>` with respect to every weight and bias.
    pub fn grad_params(&self, trace: &ForwardTrace, cotangent: &[f64]) -> Result<ParamGrads> {
        let mut grads = ParamGrads::zeros_like(self);
        self.backward(trace, cotangent, Some(&mut grads), false)?;
        Ok(grads)
    }

    /// Like [`Mlp::grad_params`] but accumulates into existing buffers.
    pub fn accumulate_grad_params(
        &self,
        trace: &ForwardTrace,
        cotangent: &[f64],
        grads: &mut ParamGrads,
    ) -> Result<()> {
        self.backward(trace, cotangent, Some(grads), false).map(|_| ())
    }

    /// Gradient of `<cotangent, logits>` with respect to the network input.
    pub fn grad_input(&self, trace: &ForwardTrace, cotangent: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .backward(trace, cotangent, None, true)?
            .expect("input gradient requested"))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn locate(&self, mut index: usize) -> (usize, bool, usize) {
        for (k, l) in self.layers.iter().enumerate() {
            if index < l.weights.len() {
                return (k, true, index);
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                return (k, false, index);
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter by flat index: layer by layer, weights (row-major) then bias.
    pub fn param(&self, index: usize) -> f64 {
        let (k, is_w, i) = self.locate(index);
        let l = &self.layers[k];
        if is_w {
            l.weights[i]
        } else {
            l.bias[i]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (k, is_w, i) = self.locate(index);
        let l = &mut self.layers[k];
        if is_w {
            l.weights[i] = value;
        } else {
            l.bias[i] = value;
        }
    }

    /// Mutable access to each layer's `(weights, bias)` in order.
    pub fn params_mut(&mut self) -> impl Iterator<Item = (&mut [f64], &mut [f64])> {
        self.layers
            .iter_mut()
            .map(|l| (l.weights.as_mut_slice(), l.bias.as_mut_slice()))
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// On-disk checkpoint layout.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    version: u32,
    dims: Vec<usize>,
    layers: Vec<LayerDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    activation: Activation,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl From<&Mlp> for ModelDoc {
    fn from(m: &Mlp) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            dims: m.dims(),
            layers: m
                .layers
                .iter()
                .map(|l| LayerDoc {
                    rows: l.rows,
                    cols: l.cols,
                    activation: l.activation,
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelDoc> for Mlp {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(Error::contract(format!(
                "unsupported model format version {}",
                doc.version
            )));
        }
        let layers = doc
            .layers
            .into_iter()
            .map(|l| Dense::new(l.rows, l.cols, l.weights, l.bias, l.activation))
            .collect::<Result<Vec<_>>>()?;
        let model = Mlp::new(layers)?;
        if model.dims() != doc.dims {
            return Err(Error::contract(format!(
                "dims {:?} do not match layers {:?}",
                doc.dims,
                model.dims()
            )));
        }
        Ok(model)
    }
}

/// One-hot class indicator of length `classes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelVector {
    class: usize,
    classes: usize,
}

impl LabelVector {
    pub fn new(class: usize, classes: usize) -> Result<Self> {
        if class >= classes {
            return Err(Error::contract(format!(
                "label {class} out of range for {classes} classes"
            )));
        }
        Ok(Self { class, classes })
    }

    /// Parses an indicator vector; exactly one entry must be 1 and the rest 0.
    pub fn from_one_hot(v: &[f64]) -> Result<Self> {
        let mut hot = None;
        for (i, &x) in v.iter().enumerate() {
            if x == 1.0 && hot.is_none() {
                hot = Some(i);
            } else if x != 0.0 {
                return Err(Error::contract(format!("invalid one-hot vector {v:?}")));
            }
        }
        let class = hot.ok_or_else(|| Error::contract("one-hot vector has no hot entry"))?;
        Self::new(class, v.len())
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.classes];
        v[self.class] = 1.0;
        v
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{what}[{i}] = {}", v[i]))),
        None => Ok(()),
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_finite(logits, "logits")?;
    if logits.is_empty() {
        return Err(Error::contract("softmax of an empty vector"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// `-ln(probs[class])`, with the probability clamped at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f64], y: &LabelVector) -> Result<f64> {
    if probs.len() != y.classes {
        return Err(Error::shape("cross-entropy probabilities", y.classes, probs.len()));
    }
    check_finite(probs, "probs")?;
    Ok(-probs[y.class].max(PROB_FLOOR).ln())
}

/// Cross-entropy of `softmax(logits)` together with its gradient with
/// respect to the logits (`softmax(logits) - onehot(y)`).
pub fn softmax_cross_entropy(logits: &[f64], y: &LabelVector) -> Result<(f64, Vec<f64>)> {
    let mut probs = softmax(logits)?;
    let loss = cross_entropy(&probs, y)?;
    probs[y.class] -= 1.0;
    Ok((loss, probs))
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
