//! Small feed-forward network engine: dense layers, embedding tables with
//! softmax term weighting, inverted dropout, exact backpropagation and Adam.
//!
//! Everything is `f64`. Reductions run in a fixed order so that results are
//! bit-reproducible.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TermId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Linear => 1,
            Activation::Tanh => 2,
            Activation::Sigmoid => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Activation::Relu,
            1 => Activation::Linear,
            2 => Activation::Tanh,
            3 => Activation::Sigmoid,
            _ => return Err(Error::Format(format!("unknown activation tag {tag}"))),
        })
    }
}

/// Fully connected layer, `weights` row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs, activation);
        for w in &mut layer.weights {
            *w = rng.gen_range(-limit..limit);
        }
        layer
    }

    fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }
}

/// Network input: either a dense vector or a sparse `(index, value)` list
/// over a `len`-dimensional space.
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    Dense(&'a [f64]),
    Sparse {
        len: usize,
        entries: &'a [(u32, f64)],
    },
}

impl Input<'_> {
    pub fn len(&self) -> usize {
        match self {
            Input::Dense(x) => x.len(),
            Input::Sparse { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn to_owned(self) -> OwnedInput {
        match self {
            Input::Dense(x) => OwnedInput::Dense(x.to_vec()),
            Input::Sparse { entries, .. } => OwnedInput::Sparse(entries.to_vec()),
        }
    }
}

#[derive(Debug, Clone)]
enum OwnedInput {
    Dense(Vec<f64>),
    Sparse(Vec<(u32, f64)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Activations recorded by [`Mlp::forward`] for one input.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    input: OwnedInput,
    /// Post-activation (and post-dropout) output of every layer.
    outputs: Vec<Vec<f64>>,
    /// Dropout multipliers per hidden layer (0 or 1/(1-rate)); empty when off.
    masks: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    pub fn add(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            add_into(&mut a.weights, &b.weights);
            add_into(&mut a.bias, &b.bias);
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Multi-layer perceptron. Dropout applies to the output of every hidden layer.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    dropout: f64,
    version: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.dropout == other.dropout
    }
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>, dropout: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "network needs at least one layer".into(),
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Shape {
                    expected: pair[0].outputs,
                    got: pair[1].inputs,
                });
            }
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {dropout} not in [0, 1)"
            )));
        }
        Ok(Self {
            layers,
            dropout,
            version: fresh_version(),
        })
    }

    /// ReLU hidden layers of the given sizes, Glorot init, one output unit.
    pub fn feed_forward<R: Rng>(
        input: usize,
        hidden: &[usize],
        output: Activation,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            layers.push(DenseLayer::glorot(prev, h, Activation::Relu, rng));
            prev = h;
        }
        layers.push(DenseLayer::glorot(prev, 1, output, rng));
        Self::new(layers, dropout)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable access; invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.version = fresh_version();
        &mut self.layers
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn set_dropout(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {rate} not in [0, 1)"
            )));
        }
        self.dropout = rate;
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn first_preactivation(&self, input: Input<'_>) -> Vec<f64> {
        let l = &self.layers[0];
        match input {
            Input::Dense(x) => (0..l.outputs)
                .map(|o| l.bias[o] + dot(l.row(o), x))
                .collect(),
            Input::Sparse { entries, .. } => {
                let mut z = l.bias.clone();
                for (o, zo) in z.iter_mut().enumerate() {
                    let row = l.row(o);
                    for &(i, v) in entries {
                        *zo += row[i as usize] * v;
                    }
                }
                z
            }
        }
    }

    pub fn forward<R: Rng>(
        &self,
        input: Input<'_>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        self.forward_impl(input, None, mode, rng)
    }

    /// [`Mlp::forward`] where `base` is the first-layer contribution of input
    /// entries left out of `input`. Gradients of the weights behind `base`
    /// are the caller's job.
    pub fn forward_with_base<R: Rng>(
        &self,
        input: Input<'_>,
        base: &[f64],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_base(base)?;
        self.forward_impl(input, Some(base), mode, rng)
    }

    fn check_base(&self, base: &[f64]) -> Result<()> {
        if base.len() != self.layers[0].outputs {
            return Err(Error::Shape {
                expected: self.layers[0].outputs,
                got: base.len(),
            });
        }
        Ok(())
    }

    fn forward_impl<R: Rng>(
        &self,
        input: Input<'_>,
        base: Option<&[f64]>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        if input.len() != self.input_len() {
            return Err(Error::Shape {
                expected: self.input_len(),
                got: input.len(),
            });
        }
        if let Input::Sparse { len, entries } = input {
            if entries.iter().any(|&(i, _)| i as usize >= len) {
                return Err(Error::InvalidArgument("sparse index out of range".into()));
            }
        }
        let drop = mode == Mode::Train && self.dropout > 0.0;
        let keep_scale = 1.0 / (1.0 - self.dropout);
        let last = self.layers.len() - 1;
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::new();
        let mut z = self.first_preactivation(input);
        if let Some(b) = base {
            add_into(&mut z, b);
        }
        for (li, layer) in self.layers.iter().enumerate() {
            if li > 0 {
                let prev: &Vec<f64> = &outputs[li - 1];
                z = (0..layer.outputs)
                    .map(|o| layer.bias[o] + dot(layer.row(o), prev))
                    .collect();
            }
            let mut a: Vec<f64> = z.iter().map(|&x| layer.activation.apply(x)).collect();
            if drop && li < last {
                let mask: Vec<f64> = (0..a.len())
                    .map(|_| {
                        if rng.gen::<f64>() < self.dropout {
                            0.0
                        } else {
                            keep_scale
                        }
                    })
                    .collect();
                for (x, m) in a.iter_mut().zip(&mask) {
                    *x *= m;
                }
                masks.push(mask);
            }
            outputs.push(a);
        }
        let out = outputs[last].clone();
        Ok((
            out,
            ForwardCache {
                version: self.version,
                input: input.to_owned(),
                outputs,
                masks,
            },
        ))
    }

    /// Deterministic inference-mode forward.
    pub fn infer(&self, input: Input<'_>) -> Result<Vec<f64>> {
        if input.len() != self.input_len() {
            return Err(Error::Shape {
                expected: self.input_len(),
                got: input.len(),
            });
        }
        let pre = self.first_preactivation(input);
        Ok(self.infer_from_first_preactivation_with_bias(pre))
    }

    /// [`Mlp::infer`] with a precomputed first-layer contribution `base`.
    pub fn infer_with_base(&self, input: Input<'_>, base: &[f64]) -> Result<Vec<f64>> {
        self.check_base(base)?;
        if input.len() != self.input_len() {
            return Err(Error::Shape {
                expected: self.input_len(),
                got: input.len(),
            });
        }
        let mut pre = self.first_preactivation(input);
        add_into(&mut pre, base);
        Ok(self.infer_from_first_preactivation_with_bias(pre))
    }

    /// Contribution `W0[:, offset..offset+block.len()] * block` of one input
    /// block to the first layer's pre-activation (no bias).
    pub fn first_layer_block(&self, offset: usize, block: Input<'_>) -> Vec<f64> {
        let l = &self.layers[0];
        (0..l.outputs)
            .map(|o| {
                let row = &l.row(o)[offset..offset + block.len()];
                match block {
                    Input::Dense(x) => dot(row, x),
                    Input::Sparse { entries, .. } => {
                        entries.iter().map(|&(i, v)| row[i as usize] * v).sum()
                    }
                }
            })
            .collect()
    }

    /// Inference given the first layer's pre-activation without bias, as a
    /// sum of [`Mlp::first_layer_block`] results.
    pub fn infer_from_blocks(&self, mut pre: Vec<f64>) -> Vec<f64> {
        for (z, b) in pre.iter_mut().zip(&self.layers[0].bias) {
            *z += b;
        }
        self.infer_from_first_preactivation_with_bias(pre)
    }

    fn infer_from_first_preactivation_with_bias(&self, z0: Vec<f64>) -> Vec<f64> {
        let mut a: Vec<f64> = z0
            .iter()
            .map(|&x| self.layers[0].activation.apply(x))
            .collect();
        for layer in &self.layers[1..] {
            a = (0..layer.outputs)
                .map(|o| {
                    layer
                        .activation
                        .apply(layer.bias[o] + dot(layer.row(o), &a))
                })
                .collect();
        }
        a
    }

    /// Accumulate parameter gradients for `upstream = dL/d(output)` into
    /// `grads`. Returns `dL/d(input)` when `want_input_grad` is set.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut MlpGrads,
        want_input_grad: bool,
    ) -> Result<Option<Vec<f64>>> {
        if cache.version != self.version || cache.outputs.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        let last = self.layers.len() - 1;
        if upstream.len() != self.layers[last].outputs {
            return Err(Error::Shape {
                expected: self.layers[last].outputs,
                got: upstream.len(),
            });
        }
        let mut delta: Vec<f64> = upstream.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let out = &cache.outputs[li];
            if li < last && !cache.masks.is_empty() {
                let mask = &cache.masks[li];
                // out = act(z) * mask; act'(z) from the undropped output
                for ((d, &m), &y) in delta.iter_mut().zip(mask).zip(out) {
                    *d = if m == 0.0 {
                        0.0
                    } else {
                        *d * m * layer.activation.grad_from_output(y / m)
                    };
                }
            } else {
                for (d, &y) in delta.iter_mut().zip(out) {
                    *d *= layer.activation.grad_from_output(y);
                }
            }
            let g = &mut grads.layers[li];
            add_into(&mut g.bias, &delta);
            if li > 0 {
                let prev = &cache.outputs[li - 1];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        axpy(
                            &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs],
                            d,
                            prev,
                        );
                    }
                }
                let mut next = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        axpy(&mut next, d, layer.row(o));
                    }
                }
                delta = next;
            } else {
                match &cache.input {
                    OwnedInput::Dense(x) => {
                        for (o, &d) in delta.iter().enumerate() {
                            if d != 0.0 {
                                axpy(
                                    &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs],
                                    d,
                                    x,
                                );
                            }
                        }
                    }
                    OwnedInput::Sparse(entries) => {
                        for (o, &d) in delta.iter().enumerate() {
                            if d != 0.0 {
                                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                                for &(i, v) in entries {
                                    row[i as usize] += d * v;
                                }
                            }
                        }
                    }
                }
                if want_input_grad {
                    let mut gin = vec![0.0; layer.inputs];
                    for (o, &d) in delta.iter().enumerate() {
                        if d != 0.0 {
                            axpy(&mut gin, d, layer.row(o));
                        }
                    }
                    return Ok(Some(gin));
                }
            }
        }
        Ok(None)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}

/// Softmax with max subtraction.
pub fn softmax_weights(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|&w| (w - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// How a field's terms are weighted before summing their embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Softmax over the learned raw weights.
    Learned,
    /// Plain average.
    Uniform,
    /// Fixed weights proportional to idf.
    Idf,
}

/// Sorted `(term, count)` bag of a field.
pub type Bag = Vec<(TermId, u32)>;

/// Turn a term list into a sorted bag; out-of-range ids (such as OOV) are dropped.
pub fn bag_of(terms: &[TermId], vocab_size: usize) -> Bag {
    let mut ts: Vec<TermId> = terms
        .iter()
        .copied()
        .filter(|&t| (t as usize) < vocab_size)
        .collect();
    ts.sort_unstable();
    let mut bag: Bag = Vec::new();
    for t in ts {
        match bag.last_mut() {
            Some((last, c)) if *last == t => *c += 1,
            _ => bag.push((t, 1)),
        }
    }
    bag
}

/// Embedding function (rows of `vectors`) plus per-term raw weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub vocab_size: usize,
    pub dim: usize,
    /// Row-major `vocab_size x dim`.
    pub vectors: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Result of composing one field; `probs[i]` is the normalized weight mass of
/// bag entry `i` (count included).
#[derive(Debug, Clone, PartialEq)]
pub struct Composed {
    pub vector: Vec<f64>,
    pub probs: Vec<f64>,
}

impl EmbeddingTable {
    /// Uniform(-0.05, 0.05) embeddings, zero raw weights.
    pub fn random<R: Rng>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            vocab_size,
            dim,
            vectors: (0..vocab_size * dim)
                .map(|_| rng.gen_range(-0.05..0.05))
                .collect(),
            weights: vec![0.0; vocab_size],
        }
    }

    pub fn row(&self, t: TermId) -> &[f64] {
        let t = t as usize;
        &self.vectors[t * self.dim..(t + 1) * self.dim]
    }

    pub fn row_mut(&mut self, t: TermId) -> &mut [f64] {
        let t = t as usize;
        &mut self.vectors[t * self.dim..(t + 1) * self.dim]
    }

    fn field_probs(&self, bag: &[(TermId, u32)], weighting: Weighting, idf: &[f64]) -> Vec<f64> {
        match weighting {
            Weighting::Learned => {
                let max = bag
                    .iter()
                    .map(|&(t, _)| self.weights[t as usize])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mass: Vec<f64> = bag
                    .iter()
                    .map(|&(t, c)| c as f64 * (self.weights[t as usize] - max).exp())
                    .collect();
                let total: f64 = mass.iter().sum();
                mass.into_iter().map(|m| m / total).collect()
            }
            Weighting::Uniform => {
                let n: u32 = bag.iter().map(|&(_, c)| c).sum();
                bag.iter().map(|&(_, c)| c as f64 / n as f64).collect()
            }
            Weighting::Idf => {
                let mass: Vec<f64> = bag
                    .iter()
                    .map(|&(t, c)| c as f64 * idf[t as usize])
                    .collect();
                let total: f64 = mass.iter().sum();
                mass.into_iter().map(|m| m / total).collect()
            }
        }
    }

    /// Weighted sum of the bag's embeddings, summed in ascending term order.
    pub fn compose(
        &self,
        bag: &[(TermId, u32)],
        weighting: Weighting,
        idf: &[f64],
    ) -> Result<Composed> {
        if bag.is_empty() {
            return Err(Error::AllOov);
        }
        let probs = self.field_probs(bag, weighting, idf);
        let mut vector = vec![0.0; self.dim];
        for (&(t, _), &p) in bag.iter().zip(&probs) {
            axpy(&mut vector, p, self.row(t));
        }
        Ok(Composed { vector, probs })
    }

    /// Backpropagate `upstream = dL/d(vector)` through [`EmbeddingTable::compose`].
    pub fn compose_backward(
        &self,
        bag: &[(TermId, u32)],
        composed: &Composed,
        upstream: &[f64],
        weighting: Weighting,
        grads: &mut EmbedGrads,
        train_vectors: bool,
    ) {
        let g_dot_v = dot(upstream, &composed.vector);
        for (&(t, _), &p) in bag.iter().zip(&composed.probs) {
            let row = self.row(t);
            if weighting == Weighting::Learned {
                grads.add_weight(t, p * (dot(upstream, row) - g_dot_v));
            }
            if train_vectors {
                grads.add_row(t, p, upstream);
            }
        }
    }
}

/// Gradient buffers for an [`EmbeddingTable`], tracking touched rows so that
/// clearing and merging cost only what was used.
#[derive(Debug, Clone)]
pub struct EmbedGrads {
    pub dim: usize,
    pub vectors: Vec<f64>,
    pub weights: Vec<f64>,
    touched: Vec<bool>,
    rows: Vec<TermId>,
}

impl EmbedGrads {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        Self {
            dim,
            vectors: vec![0.0; vocab_size * dim],
            weights: vec![0.0; vocab_size],
            touched: vec![false; vocab_size],
            rows: Vec::new(),
        }
    }

    fn mark(&mut self, t: TermId) {
        if !self.touched[t as usize] {
            self.touched[t as usize] = true;
            self.rows.push(t);
        }
    }

    pub fn add_weight(&mut self, t: TermId, g: f64) {
        self.mark(t);
        self.weights[t as usize] += g;
    }

    pub fn add_row(&mut self, t: TermId, scale: f64, g: &[f64]) {
        self.mark(t);
        let s = t as usize * self.dim;
        axpy(&mut self.vectors[s..s + self.dim], scale, g);
    }

    pub fn row(&self, t: TermId) -> &[f64] {
        let s = t as usize * self.dim;
        &self.vectors[s..s + self.dim]
    }

    pub fn touched_rows(&self) -> &[TermId] {
        &self.rows
    }

    pub fn clear(&mut self) {
        for &t in &self.rows {
            let s = t as usize * self.dim;
            self.vectors[s..s + self.dim].fill(0.0);
            self.weights[t as usize] = 0.0;
            self.touched[t as usize] = false;
        }
        self.rows.clear();
    }

    /// Add `other` into `self`, visiting rows in ascending term order.
    pub fn add(&mut self, other: &EmbedGrads) {
        let mut rows = other.rows.clone();
        rows.sort_unstable();
        for t in rows {
            self.mark(t);
            self.weights[t as usize] += other.weights[t as usize];
            let s = t as usize * self.dim;
            add_into(
                &mut self.vectors[s..s + self.dim],
                &other.vectors[s..s + self.dim],
            );
        }
    }
}

/// Compose a term list (any order, duplicates allowed) into one vector.
pub fn compose_field(
    terms: &[TermId],
    table: &EmbeddingTable,
    weighting: Weighting,
    idf: &[f64],
) -> Result<Vec<f64>> {
    Ok(table
        .compose(&bag_of(terms, table.vocab_size), weighting, idf)?
        .vector)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(lr: f64) -> Self {
        Self {
            learning_rate: lr,
            ..Self::default()
        }
    }
}

/// Adam moments for a fixed list of parameter slices.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update over all slices.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Shape {
                expected: self.first.len(),
                got: params.len().min(grads.len()),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Shape {
                    expected: m.len(),
                    got: p.len().min(g.len()),
                });
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= learning_rate * mhat / (vhat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Single-slice convenience wrapper around [`AdamState::step`].
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    state.step(&mut [params], &[grads])
}
