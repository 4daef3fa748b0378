//! Streaming data model and the estimator contract.
//!
//! An [`Instance`] is an insertion-ordered feature map, so new features can
//! appear at any point of the stream. Learners implement [`Estimator`] and
//! declare which of the per-instance operations they support; calling any
//! other operation yields [`Error::Unsupported`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single feature value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Numeric(f64),
    Categorical(String),
}

impl FeatureValue {
    pub fn as_numeric(&self) -> Option<f64> {
        match self {
            FeatureValue::Numeric(v) => Some(*v),
            FeatureValue::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&str> {
        match self {
            FeatureValue::Categorical(s) => Some(s),
            FeatureValue::Numeric(_) => None,
        }
    }

    /// Text rendering used when a value acts as a group or category key.
    pub fn key(&self) -> String {
        match self {
            FeatureValue::Numeric(v) => format!("{v}"),
            FeatureValue::Categorical(s) => s.clone(),
        }
    }
}

impl From<f64> for FeatureValue {
    fn from(v: f64) -> Self {
        FeatureValue::Numeric(v)
    }
}

impl From<&str> for FeatureValue {
    fn from(v: &str) -> Self {
        FeatureValue::Categorical(v.to_string())
    }
}

impl From<String> for FeatureValue {
    fn from(v: String) -> Self {
        FeatureValue::Categorical(v)
    }
}

/// Feature map of one observation. Iteration follows first-insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Instance {
    features: IndexMap<String, FeatureValue>,
}

impl Instance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            features: IndexMap::with_capacity(n),
        }
    }

    /// Builds an instance of numeric features.
    pub fn from_numeric<'a, I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut inst = Self::new();
        for (k, v) in pairs {
            inst.insert(k, FeatureValue::Numeric(v));
        }
        inst
    }

    /// Inserts or replaces a feature. Replacing keeps the original position.
    /// No validation happens here; see [`Instance::validate`].
    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<FeatureValue>) {
        self.features.insert(name.into(), value.into());
    }

    /// Inserts a numeric feature, rejecting NaN and infinities.
    pub fn insert_numeric(&mut self, name: impl Into<String>, value: f64) -> Result<()> {
        let name = name.into();
        if !value.is_finite() {
            return Err(Error::Value(format!("feature `{name}` is not finite: {value}")));
        }
        self.features.insert(name, FeatureValue::Numeric(value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&FeatureValue> {
        self.features.get(name)
    }

    pub fn numeric(&self, name: &str) -> Option<f64> {
        self.features.get(name).and_then(FeatureValue::as_numeric)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.features.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<FeatureValue> {
        self.features.shift_remove(name)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &FeatureValue)> {
        self.features.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.keys().map(String::as_str)
    }

    /// Numeric features only, in insertion order.
    pub fn numeric_features(&self) -> impl Iterator<Item = (&str, f64)> {
        self.features
            .iter()
            .filter_map(|(k, v)| v.as_numeric().map(|x| (k.as_str(), x)))
    }

    /// Checks the stream invariant that numeric values are finite.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in &self.features {
            if let FeatureValue::Numeric(v) = value {
                if !v.is_finite() {
                    return Err(Error::Value(format!("feature `{name}` is not finite: {v}")));
                }
            }
        }
        Ok(())
    }
}

impl<'a> FromIterator<(&'a str, FeatureValue)> for Instance {
    fn from_iter<T: IntoIterator<Item = (&'a str, FeatureValue)>>(iter: T) -> Self {
        let mut inst = Instance::new();
        for (k, v) in iter {
            inst.insert(k, v);
        }
        inst
    }
}

/// Class identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassId(pub u32);

impl ClassId {
    /// Placeholder answered by classifiers that have not seen any class yet.
    pub const UNKNOWN: ClassId = ClassId(u32::MAX);
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == ClassId::UNKNOWN {
            write!(f, "unknown")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Target attached to a training instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Class(ClassId),
    Real(f64),
    /// Ground truth of anomaly streams.
    Anomaly(bool),
}

impl Label {
    pub fn class(&self) -> Option<ClassId> {
        match self {
            Label::Class(c) => Some(*c),
            Label::Anomaly(b) => Some(ClassId(u32::from(*b))),
            Label::Real(_) => None,
        }
    }

    /// Anomaly truth; class labels other than 0 count as anomalous.
    pub fn is_anomaly(&self) -> Option<bool> {
        match self {
            Label::Anomaly(b) => Some(*b),
            Label::Class(c) => Some(c.0 != 0),
            Label::Real(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub x: Instance,
    pub y: Label,
}

impl LabeledInstance {
    pub fn new(x: Instance, y: Label) -> Self {
        Self { x, y }
    }

    pub fn validate(&self) -> Result<()> {
        self.x.validate()?;
        if let Label::Real(v) = self.y {
            if !v.is_finite() {
                return Err(Error::Value(format!("target is not finite: {v}")));
            }
        }
        if self.y == Label::Class(ClassId::UNKNOWN) {
            return Err(Error::Value("the unknown class cannot be learned".into()));
        }
        Ok(())
    }
}

/// Probability distribution over classes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassDistribution(BTreeMap<ClassId, f64>);

impl ClassDistribution {
    /// Answer of a classifier that has seen no class.
    pub fn cold_start() -> Self {
        let mut m = BTreeMap::new();
        m.insert(ClassId::UNKNOWN, 1.0);
        Self(m)
    }

    /// Uniform over `classes`, or the cold-start answer when empty.
    pub fn uniform<I: IntoIterator<Item = ClassId>>(classes: I) -> Self {
        let classes: Vec<_> = classes.into_iter().collect();
        if classes.is_empty() {
            return Self::cold_start();
        }
        let p = 1.0 / classes.len() as f64;
        Self(classes.into_iter().map(|c| (c, p)).collect())
    }

    /// Normalises non-negative weights. Falls back to uniform when they sum to zero.
    pub fn from_weights<I: IntoIterator<Item = (ClassId, f64)>>(weights: I) -> Self {
        let m: BTreeMap<ClassId, f64> = weights.into_iter().collect();
        let total: f64 = m.values().sum();
        if m.is_empty() {
            return Self::cold_start();
        }
        if total <= 0.0 || !total.is_finite() {
            return Self::uniform(m.into_keys());
        }
        Self(m.into_iter().map(|(c, w)| (c, w / total)).collect())
    }

    pub fn get(&self, class: ClassId) -> f64 {
        self.0.get(&class).copied().unwrap_or(0.0)
    }

    /// Most probable class; ties go to the smallest id.
    pub fn argmax(&self) -> ClassId {
        let mut best = (ClassId::UNKNOWN, f64::NEG_INFINITY);
        for (&c, &p) in &self.0 {
            if p > best.1 {
                best = (c, p);
            }
        }
        best.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, f64)> + '_ {
        self.0.iter().map(|(c, p)| (*c, *p))
    }

    pub fn sum(&self) -> f64 {
        self.0.values().sum()
    }

    /// True when every probability is non-negative and the total is 1 within 1e-9.
    pub fn is_valid(&self) -> bool {
        !self.0.is_empty() && self.0.values().all(|p| *p >= 0.0 && p.is_finite()) && (self.sum() - 1.0).abs() <= 1e-9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    ClassLabel(ClassId),
    ClassDistribution(ClassDistribution),
    Score(f64),
}

/// Operations a learner supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Capabilities {
    pub can_learn_one: bool,
    pub can_predict_one: bool,
    pub can_predict_proba_one: bool,
    pub can_score_one: bool,
    pub can_transform_one: bool,
}

impl Capabilities {
    pub const CLASSIFIER: Capabilities = Capabilities {
        can_learn_one: true,
        can_predict_one: true,
        can_predict_proba_one: true,
        can_score_one: false,
        can_transform_one: false,
    };

    pub const TRANSFORMER: Capabilities = Capabilities {
        can_learn_one: true,
        can_predict_one: false,
        can_predict_proba_one: false,
        can_score_one: false,
        can_transform_one: true,
    };

    pub const ANOMALY_DETECTOR: Capabilities = Capabilities {
        can_learn_one: true,
        can_predict_one: false,
        can_predict_proba_one: false,
        can_score_one: true,
        can_transform_one: false,
    };
}

/// The per-instance learning contract.
///
/// Only the operations flagged in [`Estimator::capabilities`] may be called;
/// the default bodies report [`Error::Unsupported`]. Query methods take
/// `&self`, so predicting never changes learner state.
pub trait Estimator: Send {
    fn name(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    /// Learns from one instance. Supervised learners require `y`.
    fn learn_one(&mut self, x: &Instance, y: Option<&Label>) -> Result<()> {
        let _ = (x, y);
        Err(Error::unsupported(self.name(), "learn_one"))
    }

    /// Learns with an instance weight. Learners without weight support accept
    /// only a weight of exactly 1.
    fn learn_weighted(&mut self, x: &Instance, y: Option<&Label>, weight: f64) -> Result<()> {
        if weight == 1.0 {
            self.learn_one(x, y)
        } else {
            Err(Error::unsupported(self.name(), "weighted learn_one"))
        }
    }

    fn predict_one(&self, x: &Instance) -> Result<Prediction> {
        if self.capabilities().can_predict_proba_one {
            return Ok(Prediction::ClassLabel(self.predict_proba_one(x)?.argmax()));
        }
        Err(Error::unsupported(self.name(), "predict_one"))
    }

    fn predict_proba_one(&self, x: &Instance) -> Result<ClassDistribution> {
        let _ = x;
        Err(Error::unsupported(self.name(), "predict_proba_one"))
    }

    /// Anomaly score; larger is more anomalous.
    fn score_one(&self, x: &Instance) -> Result<f64> {
        let _ = x;
        Err(Error::unsupported(self.name(), "score_one"))
    }

    fn transform_one(&self, x: &Instance) -> Result<Instance> {
        let _ = x;
        Err(Error::unsupported(self.name(), "transform_one"))
    }

    /// Structural memory estimate in bytes.
    fn memory_bytes(&self) -> usize {
        0
    }

    /// Digest of the learnable state; changes whenever learning changes the model.
    fn state_checksum(&self) -> u64;
}

impl<E: Estimator + ?Sized> Estimator for Box<E> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn learn_one(&mut self, x: &Instance, y: Option<&Label>) -> Result<()> {
        (**self).learn_one(x, y)
    }
    fn learn_weighted(&mut self, x: &Instance, y: Option<&Label>, weight: f64) -> Result<()> {
        (**self).learn_weighted(x, y, weight)
    }
    fn predict_one(&self, x: &Instance) -> Result<Prediction> {
        (**self).predict_one(x)
    }
    fn predict_proba_one(&self, x: &Instance) -> Result<ClassDistribution> {
        (**self).predict_proba_one(x)
    }
    fn score_one(&self, x: &Instance) -> Result<f64> {
        (**self).score_one(x)
    }
    fn transform_one(&self, x: &Instance) -> Result<Instance> {
        (**self).transform_one(x)
    }
    fn memory_bytes(&self) -> usize {
        (**self).memory_bytes()
    }
    fn state_checksum(&self) -> u64 {
        (**self).state_checksum()
    }
}

/// FNV-1a digest used for state checksums.
#[derive(Debug, Clone)]
pub struct StateHasher(u64);

impl Default for StateHasher {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl StateHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.bytes(&v.to_bits().to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.u64(s.len() as u64).bytes(s.as_bytes())
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// Transformer stages followed by one terminal estimator.
pub struct Pipeline {
    stages: Vec<Box<dyn Estimator>>,
    terminal: Box<dyn Estimator>,
    name: String,
}

impl Pipeline {
    pub fn new(stages: Vec<Box<dyn Estimator>>, terminal: Box<dyn Estimator>) -> Result<Self> {
        for s in &stages {
            if !s.capabilities().can_transform_one {
                return Err(Error::Contract(format!("pipeline stage {} cannot transform", s.name())));
            }
        }
        let caps = terminal.capabilities();
        if !(caps.can_predict_one || caps.can_predict_proba_one || caps.can_score_one) {
            return Err(Error::Contract(format!(
                "terminal estimator {} neither predicts nor scores",
                terminal.name()
            )));
        }
        let name = stages
            .iter()
            .map(|s| s.name())
            .chain(std::iter::once(terminal.name()))
            .collect::<Vec<_>>()
            .join(" | ");
        Ok(Self { stages, terminal, name })
    }

    pub fn stages(&self) -> &[Box<dyn Estimator>] {
        &self.stages
    }

    pub fn terminal(&self) -> &dyn Estimator {
        self.terminal.as_ref()
    }

    fn transform(&self, x: &Instance) -> Result<Instance> {
        let mut current = x.clone();
        for stage in &self.stages {
            current = stage.transform_one(&current)?;
        }
        Ok(current)
    }

    fn learn_inner(&mut self, x: &Instance, y: Option<&Label>, weight: f64) -> Result<()> {
        if !self.terminal.capabilities().can_learn_one {
            return Err(Error::unsupported(self.terminal.name(), "learn_one"));
        }
        x.validate()?;
        let mut current = x.clone();
        for stage in &mut self.stages {
            stage.learn_one(&current, None)?;
            current = stage.transform_one(&current)?;
        }
        self.terminal.learn_weighted(&current, y, weight)
    }
}

impl Estimator for Pipeline {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> Capabilities {
        let t = self.terminal.capabilities();
        Capabilities {
            can_transform_one: false,
            ..t
        }
    }

    fn learn_one(&mut self, x: &Instance, y: Option<&Label>) -> Result<()> {
        self.learn_inner(x, y, 1.0)
    }

    fn learn_weighted(&mut self, x: &Instance, y: Option<&Label>, weight: f64) -> Result<()> {
        self.learn_inner(x, y, weight)
    }

    fn predict_one(&self, x: &Instance) -> Result<Prediction> {
        self.terminal.predict_one(&self.transform(x)?)
    }

    fn predict_proba_one(&self, x: &Instance) -> Result<ClassDistribution> {
        self.terminal.predict_proba_one(&self.transform(x)?)
    }

    fn score_one(&self, x: &Instance) -> Result<f64> {
        self.terminal.score_one(&self.transform(x)?)
    }

    fn memory_bytes(&self) -> usize {
        self.stages.iter().map(|s| s.memory_bytes()).sum::<usize>() + self.terminal.memory_bytes()
    }

    fn state_checksum(&self) -> u64 {
        let mut h = StateHasher::new();
        for s in &self.stages {
            h.u64(s.state_checksum());
        }
        h.u64(self.terminal.state_checksum());
        h.finish()
    }
}

/// Predicts the most frequent class seen so far.
#[derive(Debug, Clone, Default)]
pub struct MajorityClass {
    counts: BTreeMap<ClassId, f64>,
}

impl MajorityClass {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Estimator for MajorityClass {
    fn name(&self) -> &str {
        "MajorityClass"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::CLASSIFIER
    }

    fn learn_one(&mut self, x: &Instance, y: Option<&Label>) -> Result<()> {
        self.learn_weighted(x, y, 1.0)
    }

    fn learn_weighted(&mut self, _x: &Instance, y: Option<&Label>, weight: f64) -> Result<()> {
        let class = y
            .and_then(Label::class)
            .ok_or_else(|| Error::Value("MajorityClass needs a class label".into()))?;
        *self.counts.entry(class).or_insert(0.0) += weight;
        Ok(())
    }

    fn predict_proba_one(&self, _x: &Instance) -> Result<ClassDistribution> {
        Ok(ClassDistribution::from_weights(
            self.counts.iter().map(|(c, w)| (*c, *w)),
        ))
    }

    fn memory_bytes(&self) -> usize {
        self.counts.len() * (std::mem::size_of::<ClassId>() + std::mem::size_of::<f64>())
    }

    fn state_checksum(&self) -> u64 {
        let mut h = StateHasher::new();
        for (c, w) in &self.counts {
            h.u64(u64::from(c.0)).f64(*w);
        }
        h.finish()
    }
}

/// Shared view of how many items a [`StreamSource`] has handed out.
#[derive(Debug, Clone, Default)]
pub struct ConsumedCounter(Arc<AtomicU64>);

impl ConsumedCounter {
    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Single-pass source. Every item is yielded once; afterwards the source
/// stays exhausted.
pub struct StreamSource<T> {
    inner: Box<dyn Iterator<Item = Result<T>> + Send>,
    consumed: ConsumedCounter,
    done: bool,
    memory_bytes: usize,
}

impl<T> StreamSource<T> {
    pub fn from_results<I>(iter: I) -> Self
    where
        I: Iterator<Item = Result<T>> + Send + 'static,
    {
        Self {
            inner: Box::new(iter),
            consumed: ConsumedCounter::default(),
            done: false,
            memory_bytes: 0,
        }
    }

    /// Records a structural memory estimate of the underlying reader.
    pub fn with_memory_bytes(mut self, bytes: usize) -> Self {
        self.memory_bytes = bytes;
        self
    }

    pub fn consumed(&self) -> u64 {
        self.consumed.get()
    }

    /// Handle that keeps reporting the count after the source is moved.
    pub fn counter(&self) -> ConsumedCounter {
        self.consumed.clone()
    }

    pub fn memory_bytes(&self) -> usize {
        self.memory_bytes
    }

    pub fn map<U, F>(self, mut f: F) -> StreamSource<U>
    where
        T: 'static,
        U: 'static,
        F: FnMut(T) -> U + Send + 'static,
    {
        StreamSource {
            inner: Box::new(self.inner.map(move |r| r.map(&mut f))),
            consumed: self.consumed,
            done: self.done,
            memory_bytes: self.memory_bytes,
        }
    }
}

impl<T: Send + 'static> StreamSource<T> {
    pub fn from_iterator<I>(iter: I) -> Self
    where
        I: IntoIterator<Item = T>,
        I::IntoIter: Send + 'static,
    {
        Self::from_results(iter.into_iter().map(Ok))
    }
}

impl<T> Iterator for StreamSource<T> {
    type Item = Result<T>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.inner.next() {
            Some(item) => {
                self.consumed.0.fetch_add(1, Ordering::Relaxed);
                Some(item)
            }
            None => {
                self.done = true;
                None
            }
        }
    }
}
