//! Dense networks with hand-written gradients and two online models built on
//! them: an MLP classifier and an autoencoder anomaly scorer.
//!
//! Both models learn one instance at a time with plain SGD. Inputs are mapped
//! to dense vectors by a [`FeatureVectorizer`] that grows as new feature names
//! appear; the network gains a zero-initialised input column for each new
//! index, so outputs for previously seen feature sets do not change.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::stream::{Capabilities, ClassDistribution, ClassId, Estimator, FeatureValue, Instance, Label, StateHasher};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
    Softmax,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Identity => {}
            Activation::Softmax => {
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in z.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                z.iter_mut().for_each(|v| *v /= sum);
            }
        }
    }

    /// Maps dL/da to dL/dz in place, given the activations `a`.
    fn backprop(self, a: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Relu => {
                for (g, a) in grad.iter_mut().zip(a) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Sigmoid => {
                for (g, a) in grad.iter_mut().zip(a) {
                    *g *= a * (1.0 - a);
                }
            }
            Activation::Identity => {}
            Activation::Softmax => {
                let dot: f64 = grad.iter().zip(a).map(|(g, a)| g * a).sum();
                for (g, a) in grad.iter_mut().zip(a) {
                    *g = a * (*g - dot);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initializer {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Glorot,
    Zeros,
}

/// Fully connected layer; `weights` is row-major `n_out × n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    n_in: usize,
    n_out: usize,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(n_in: usize, n_out: usize, activation: Activation, init: Initializer, rng: &mut impl Rng) -> Self {
        let weights = match init {
            Initializer::Zeros => vec![0.0; n_in * n_out],
            Initializer::Glorot => {
                let s = (6.0 / (n_in + n_out).max(1) as f64).sqrt();
                (0..n_in * n_out).map(|_| rng.random_range(-s..=s)).collect()
            }
        };
        Self {
            weights,
            bias: vec![0.0; n_out],
            n_in,
            n_out,
            activation,
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.n_in {
            return Err(Error::Dimension {
                expected: self.n_in,
                got: input.len(),
            });
        }
        let mut z: Vec<f64> = self
            .weights
            .chunks_exact(self.n_in.max(1))
            .take(self.n_out)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
            .collect();
        if self.n_in == 0 {
            z = self.bias.clone();
        }
        self.activation.apply(&mut z);
        Ok(z)
    }

    /// Appends zero-weight input columns up to `n_in`.
    pub fn grow_inputs(&mut self, n_in: usize) {
        if n_in <= self.n_in {
            return;
        }
        let mut w = Vec::with_capacity(n_in * self.n_out);
        for r in 0..self.n_out {
            w.extend_from_slice(&self.weights[r * self.n_in..(r + 1) * self.n_in]);
            w.extend(std::iter::repeat_n(0.0, n_in - self.n_in));
        }
        self.weights = w;
        self.n_in = n_in;
    }

    /// Appends zero-weight output rows up to `n_out`.
    pub fn grow_outputs(&mut self, n_out: usize) {
        if n_out <= self.n_out {
            return;
        }
        self.weights.resize(n_out * self.n_in, 0.0);
        self.bias.resize(n_out, 0.0);
        self.n_out = n_out;
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Mean over outputs of the squared error.
    Mse,
    /// `−Σ y log p`; expects a softmax output layer.
    CrossEntropy,
}

impl Loss {
    pub fn value(self, output: &[f64], target: &[f64]) -> f64 {
        match self {
            Loss::Mse => {
                output.iter().zip(target).map(|(a, y)| (a - y).powi(2)).sum::<f64>() / output.len().max(1) as f64
            }
            Loss::CrossEntropy => -output
                .iter()
                .zip(target)
                .filter(|(_, y)| **y > 0.0)
                .map(|(p, y)| y * p.max(1e-300).ln())
                .sum::<f64>(),
        }
    }
}

/// Activations of every layer from one forward pass; `acts[0]` is the input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], Vec::as_slice)
    }
}

/// Parameter gradients, one `(weights, bias)` pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<DenseLayer>,
}

impl Network {
    /// Builds `sizes[0] → sizes[1] → …` with `hidden` activations and `output` on the last layer.
    pub fn new(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        init: Initializer,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes[1..].contains(&0) {
            return Err(Error::Config("a network needs at least one non-empty layer".into()));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| DenseLayer::new(w[0], w[1], if i == last { output } else { hidden }, init, rng))
            .collect();
        Ok(Self { layers })
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::n_out)
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for layer in &self.layers {
            let next = layer.forward(acts.last().expect("input present"))?;
            acts.push(next);
        }
        Ok(ForwardCache { acts })
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut a = input.to_vec();
        for layer in &self.layers {
            a = layer.forward(&a)?;
        }
        Ok(a)
    }

    /// Loss and parameter gradients of `weight · loss(output, target)`.
    pub fn gradients(&self, cache: &ForwardCache, loss: Loss, target: &[f64], weight: f64) -> Result<(f64, Gradients)> {
        if cache.acts.len() != self.layers.len() + 1 {
            return Err(Error::Dimension {
                expected: self.layers.len() + 1,
                got: cache.acts.len(),
            });
        }
        let out = cache.output();
        if target.len() != out.len() {
            return Err(Error::Dimension {
                expected: out.len(),
                got: target.len(),
            });
        }
        let value = loss.value(out, target);
        let last = self.layers.last().expect("non-empty network");
        // delta = dL/dz of the current layer
        let mut delta: Vec<f64> = match (loss, last.activation) {
            (Loss::CrossEntropy, Activation::Softmax) => {
                out.iter().zip(target).map(|(p, y)| weight * (p - y)).collect()
            }
            (Loss::CrossEntropy, act) => {
                let mut g: Vec<f64> = out
                    .iter()
                    .zip(target)
                    .map(|(p, y)| -weight * y / p.max(1e-300))
                    .collect();
                act.backprop(out, &mut g);
                g
            }
            (Loss::Mse, act) => {
                let n = out.len().max(1) as f64;
                let mut g: Vec<f64> = out
                    .iter()
                    .zip(target)
                    .map(|(a, y)| weight * 2.0 * (a - y) / n)
                    .collect();
                act.backprop(out, &mut g);
                g
            }
        };
        let mut layers = vec![(Vec::new(), Vec::new()); self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.acts[i];
            let mut gw = vec![0.0; layer.weights.len()];
            for (r, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    for (c, x) in input.iter().enumerate() {
                        gw[r * layer.n_in + c] = d * x;
                    }
                }
            }
            if i > 0 {
                let mut upstream = vec![0.0; layer.n_in];
                for (r, d) in delta.iter().enumerate() {
                    if *d != 0.0 {
                        let row = &layer.weights[r * layer.n_in..(r + 1) * layer.n_in];
                        for (u, w) in upstream.iter_mut().zip(row) {
                            *u += d * w;
                        }
                    }
                }
                self.layers[i - 1].activation.backprop(input, &mut upstream);
                layers[i] = (gw, delta);
                delta = upstream;
            } else {
                layers[i] = (gw, delta.clone());
            }
        }
        Ok((value * weight, Gradients { layers }))
    }

    /// `p ← p − lr · ∂L/∂p` for every parameter.
    pub fn step(&mut self, grads: &Gradients, lr: f64) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, g) in layer.weights.iter_mut().zip(gw) {
                *w -= lr * g;
            }
            for (b, g) in layer.bias.iter_mut().zip(gb) {
                *b -= lr * g;
            }
        }
    }

    /// One gradient step; returns the loss before the update.
    pub fn backward_and_step(
        &mut self,
        cache: &ForwardCache,
        loss: Loss,
        target: &[f64],
        lr: f64,
        weight: f64,
    ) -> Result<f64> {
        let (value, grads) = self.gradients(cache, loss, target, weight)?;
        self.step(&grads, lr);
        if !self.is_finite() {
            return Err(Error::Domain("network parameters diverged to non-finite values".into()));
        }
        Ok(value)
    }

    pub fn grow_inputs(&mut self, n_in: usize) {
        self.layers[0].grow_inputs(n_in);
    }

    pub fn grow_outputs(&mut self, n_out: usize) {
        if let Some(last) = self.layers.last_mut() {
            last.grow_outputs(n_out);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(DenseLayer::is_finite)
    }

    fn hash_into(&self, h: &mut StateHasher) {
        for l in &self.layers {
            h.u64(l.n_in as u64).u64(l.n_out as u64);
            for v in l.weights.iter().chain(&l.bias) {
                h.f64(*v);
            }
        }
    }
}

/// Maps feature names to dense input indices in first-seen order. Categorical
/// values are one-hot encoded under the key `name=value`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVectorizer {
    index: IndexMap<String, usize>,
}

fn entry(name: &str, value: &FeatureValue) -> (String, f64) {
    match value {
        FeatureValue::Numeric(v) => (name.to_string(), *v),
        FeatureValue::Categorical(s) => (format!("{name}={s}"), 1.0),
    }
}

impl FeatureVectorizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn index_of(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Dense vector of `x`, assigning trailing indices to unseen keys.
    pub fn vectorize(&mut self, x: &Instance) -> Vec<f64> {
        for (name, value) in x.iter() {
            let (key, _) = entry(name, value);
            let next = self.index.len();
            self.index.entry(key).or_insert(next);
        }
        self.vectorize_known(x).0
    }

    /// Dense vector over the known keys plus the values of unknown keys in
    /// order of appearance; the vectorizer is not modified.
    pub fn vectorize_known(&self, x: &Instance) -> (Vec<f64>, Vec<f64>) {
        let mut v = vec![0.0; self.index.len()];
        let mut extra = Vec::new();
        for (name, value) in x.iter() {
            let (key, val) = entry(name, value);
            match self.index.get(&key) {
                Some(&i) => v[i] = val,
                None => extra.push(val),
            }
        }
        (v, extra)
    }

    fn memory_bytes(&self) -> usize {
        self.index.keys().map(|k| k.len() + 16).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub seed: u64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutoencoderConfig {
    pub latent_dim: usize,
    pub sgd: SgdConfig,
    pub init: Initializer,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            sgd: SgdConfig {
                learning_rate: 0.25,
                seed: 0,
            },
            init: Initializer::Glorot,
        }
    }
}

/// Online autoencoder: ReLU encoder, sigmoid decoder, MSE reconstruction
/// error as anomaly score. Inputs are expected in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    cfg: AutoencoderConfig,
    vectorizer: FeatureVectorizer,
    net: Option<Network>,
    rng: ChaCha8Rng,
}

impl Autoencoder {
    pub fn new(cfg: AutoencoderConfig) -> Result<Self> {
        cfg.sgd.validate()?;
        if cfg.latent_dim == 0 {
            return Err(Error::Config("latent dimension must be at least 1".into()));
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.sgd.seed),
            cfg,
            vectorizer: FeatureVectorizer::new(),
            net: None,
        })
    }

    pub fn config(&self) -> &AutoencoderConfig {
        &self.cfg
    }

    pub fn network(&self) -> Option<&Network> {
        self.net.as_ref()
    }

    pub fn vectorizer(&self) -> &FeatureVectorizer {
        &self.vectorizer
    }

    /// Reconstruction error of `x`; 0 for an instance without features.
    pub fn reconstruction_error(&self, x: &Instance) -> Result<f64> {
        let (known, extra) = self.vectorizer.vectorize_known(x);
        let n = known.len() + extra.len();
        if n == 0 {
            return Ok(0.0);
        }
        let recon = match &self.net {
            Some(net) => net.predict(&known)?,
            None => vec![0.5; known.len()],
        };
        // unseen features: zero input column, zero decoder row -> sigmoid(0)
        let sq: f64 = known
            .iter()
            .zip(&recon)
            .map(|(v, r)| (v - r).powi(2))
            .chain(extra.iter().map(|v| (v - 0.5).powi(2)))
            .sum();
        Ok(sq / n as f64)
    }

    fn ensure_network(&mut self) -> Result<()> {
        let n = self.vectorizer.len();
        match &mut self.net {
            Some(net) => {
                if n > net.n_in() {
                    net.grow_inputs(n);
                    net.grow_outputs(n);
                }
            }
            None => {
                self.net = Some(Network::new(
                    &[n, self.cfg.latent_dim, n],
                    Activation::Relu,
                    Activation::Sigmoid,
                    self.cfg.init,
                    &mut self.rng,
                )?);
            }
        }
        Ok(())
    }

    /// One SGD step towards reconstructing `x`; returns the loss before the step.
    pub fn learn_step(&mut self, x: &Instance, weight: f64) -> Result<f64> {
        x.validate()?;
        let v = self.vectorizer.vectorize(x);
        if v.is_empty() {
            return Ok(0.0);
        }
        self.ensure_network()?;
        let lr = self.cfg.sgd.learning_rate;
        let net = self.net.as_mut().expect("network built");
        let cache = net.forward(&v)?;
        net.backward_and_step(&cache, Loss::Mse, &v, lr, weight)
    }
}

impl Estimator for Autoencoder {
    fn name(&self) -> &str {
        "Autoencoder"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ANOMALY_DETECTOR
    }

    fn learn_one(&mut self, x: &Instance, _y: Option<&Label>) -> Result<()> {
        self.learn_step(x, 1.0).map(|_| ())
    }

    fn learn_weighted(&mut self, x: &Instance, _y: Option<&Label>, weight: f64) -> Result<()> {
        self.learn_step(x, weight).map(|_| ())
    }

    fn score_one(&self, x: &Instance) -> Result<f64> {
        self.reconstruction_error(x)
    }

    fn memory_bytes(&self) -> usize {
        self.vectorizer.memory_bytes() + self.net.as_ref().map_or(0, |n| n.parameter_count() * 8)
    }

    fn state_checksum(&self) -> u64 {
        let mut h = StateHasher::new();
        for k in self.vectorizer.index.keys() {
            h.str(k);
        }
        if let Some(net) = &self.net {
            net.hash_into(&mut h);
        }
        h.finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden_layer_sizes: Vec<usize>,
    pub sgd: SgdConfig,
    pub init: Initializer,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_layer_sizes: vec![64],
            sgd: SgdConfig {
                learning_rate: 0.05,
                seed: 0,
            },
            init: Initializer::Glorot,
        }
    }
}

/// Online multi-layer perceptron with ReLU hidden layers and a softmax output
/// over the classes seen so far.
#[derive(Debug, Clone)]
pub struct MlpClassifier {
    cfg: MlpConfig,
    name: String,
    vectorizer: FeatureVectorizer,
    classes: Vec<ClassId>,
    net: Option<Network>,
    rng: ChaCha8Rng,
}

impl MlpClassifier {
    pub fn new(cfg: MlpConfig) -> Result<Self> {
        cfg.sgd.validate()?;
        if cfg.hidden_layer_sizes.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be at least 1".into()));
        }
        let sizes: Vec<String> = cfg.hidden_layer_sizes.iter().map(usize::to_string).collect();
        Ok(Self {
            name: format!("MLP[{}]", sizes.join(",")),
            rng: ChaCha8Rng::seed_from_u64(cfg.sgd.seed),
            cfg,
            vectorizer: FeatureVectorizer::new(),
            classes: Vec::new(),
            net: None,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.cfg
    }

    pub fn network(&self) -> Option<&Network> {
        self.net.as_ref()
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn parameter_count(&self) -> usize {
        self.net.as_ref().map_or(0, Network::parameter_count)
    }

    fn ensure_network(&mut self) -> Result<()> {
        let (n_in, n_out) = (self.vectorizer.len(), self.classes.len());
        match &mut self.net {
            Some(net) => {
                net.grow_inputs(n_in);
                net.grow_outputs(n_out);
            }
            None => {
                let mut sizes = vec![n_in];
                sizes.extend(&self.cfg.hidden_layer_sizes);
                sizes.push(n_out);
                self.net = Some(Network::new(
                    &sizes,
                    Activation::Relu,
                    Activation::Softmax,
                    self.cfg.init,
                    &mut self.rng,
                )?);
            }
        }
        Ok(())
    }
}

impl Estimator for MlpClassifier {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::CLASSIFIER
    }

    fn learn_one(&mut self, x: &Instance, y: Option<&Label>) -> Result<()> {
        self.learn_weighted(x, y, 1.0)
    }

    fn learn_weighted(&mut self, x: &Instance, y: Option<&Label>, weight: f64) -> Result<()> {
        let class = y
            .and_then(Label::class)
            .filter(|c| *c != ClassId::UNKNOWN)
            .ok_or_else(|| Error::Value("MLP needs a class label".into()))?;
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::Value(format!("invalid instance weight {weight}")));
        }
        x.validate()?;
        let v = self.vectorizer.vectorize(x);
        let target_idx = match self.classes.iter().position(|c| *c == class) {
            Some(i) => i,
            None => {
                self.classes.push(class);
                self.classes.len() - 1
            }
        };
        self.ensure_network()?;
        let lr = self.cfg.sgd.learning_rate;
        let net = self.net.as_mut().expect("network built");
        let cache = net.forward(&v)?;
        let mut target = vec![0.0; self.classes.len()];
        target[target_idx] = 1.0;
        net.backward_and_step(&cache, Loss::CrossEntropy, &target, lr, weight)?;
        Ok(())
    }

    fn predict_proba_one(&self, x: &Instance) -> Result<ClassDistribution> {
        let Some(net) = &self.net else {
            return Ok(ClassDistribution::cold_start());
        };
        // unseen features have zero input columns, so they are dropped
        let (v, _) = self.vectorizer.vectorize_known(x);
        let mut v = v;
        v.resize(net.n_in(), 0.0);
        let p = net.predict(&v)?;
        Ok(ClassDistribution::from_weights(self.classes.iter().copied().zip(p)))
    }

    fn memory_bytes(&self) -> usize {
        self.vectorizer.memory_bytes() + self.parameter_count() * 8 + self.classes.len() * 4
    }

    fn state_checksum(&self) -> u64 {
        let mut h = StateHasher::new();
        for k in self.vectorizer.index.keys() {
            h.str(k);
        }
        for c in &self.classes {
            h.u64(u64::from(c.0));
        }
        if let Some(net) = &self.net {
            net.hash_into(&mut h);
        }
        h.finish()
    }
}
