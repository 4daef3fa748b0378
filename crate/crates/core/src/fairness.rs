//! Fairness measures and stream interventions.
//!
//! Statistical parity and equal opportunity are tracked cumulatively from the
//! start of the stream. Interventions act before the learner sees the data:
//! Kamiran-Calders re-weighting, chunk-wise massaging, and C-SMOTE, which
//! oversamples the minority class inside an ADWIN-managed window.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::drift::{Adwin, AdwinConfig, DriftDetector, DriftState};
use crate::error::{Error, Result};
use crate::stream::{
    Capabilities, ClassDistribution, ClassId, Estimator, FeatureValue, Instance, Label, LabeledInstance, Prediction,
    StateHasher,
};
use crate::tree::HoeffdingTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Group {
    Deprived,
    Favored,
}

/// Which feature carries group membership and which class is favourable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitiveSpec {
    pub feature: String,
    pub deprived: String,
    pub favored: String,
    pub positive: ClassId,
}

impl SensitiveSpec {
    pub fn new(feature: &str, deprived: &str, favored: &str, positive: ClassId) -> Self {
        Self {
            feature: feature.to_string(),
            deprived: deprived.to_string(),
            favored: favored.to_string(),
            positive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.deprived == self.favored {
            return Err(Error::Config("deprived and favored group values must differ".into()));
        }
        Ok(())
    }

    pub fn group_of_value(&self, value: &str) -> Option<Group> {
        if value == self.deprived {
            Some(Group::Deprived)
        } else if value == self.favored {
            Some(Group::Favored)
        } else {
            None
        }
    }

    /// Group of an instance; `None` when the feature is missing or holds another value.
    pub fn group_of(&self, x: &Instance) -> Option<Group> {
        x.get(&self.feature).and_then(|v| self.group_of_value(&v.key()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct GroupCounts {
    pub predictions: u64,
    pub positive_predictions: u64,
    pub actual_positives: u64,
    pub true_positives: u64,
}

/// Fairness measured over everything seen up to the current step.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeFairnessTracker {
    spec: SensitiveSpec,
    steps: u64,
    favored: GroupCounts,
    deprived: GroupCounts,
    threshold: f64,
}

fn rate(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl CumulativeFairnessTracker {
    pub fn new(spec: SensitiveSpec, threshold: f64) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            steps: 0,
            favored: GroupCounts::default(),
            deprived: GroupCounts::default(),
            threshold,
        })
    }

    pub fn spec(&self) -> &SensitiveSpec {
        &self.spec
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn counts(&self, group: Group) -> GroupCounts {
        match group {
            Group::Favored => self.favored,
            Group::Deprived => self.deprived,
        }
    }

    pub fn update(&mut self, group_value: &str, predicted: ClassId, actual: ClassId) -> Result<()> {
        let group = self
            .spec
            .group_of_value(group_value)
            .ok_or_else(|| Error::Value(format!("unknown group value `{group_value}`")))?;
        self.update_group(group, predicted, actual);
        Ok(())
    }

    pub fn update_group(&mut self, group: Group, predicted: ClassId, actual: ClassId) {
        let pos = self.spec.positive;
        let c = match group {
            Group::Favored => &mut self.favored,
            Group::Deprived => &mut self.deprived,
        };
        c.predictions += 1;
        c.positive_predictions += u64::from(predicted == pos);
        c.actual_positives += u64::from(actual == pos);
        c.true_positives += u64::from(predicted == pos && actual == pos);
        self.steps += 1;
    }

    /// P(ŷ=+ | favored) − P(ŷ=+ | deprived); 0 until both groups were seen.
    pub fn statistical_parity(&self) -> f64 {
        match (
            rate(self.favored.positive_predictions, self.favored.predictions),
            rate(self.deprived.positive_predictions, self.deprived.predictions),
        ) {
            (Some(f), Some(d)) => f - d,
            _ => 0.0,
        }
    }

    /// TPR(favored) − TPR(deprived); 0 until both groups had a positive.
    pub fn equal_opportunity(&self) -> f64 {
        match (
            rate(self.favored.true_positives, self.favored.actual_positives),
            rate(self.deprived.true_positives, self.deprived.actual_positives),
        ) {
            (Some(f), Some(d)) => f - d,
            _ => 0.0,
        }
    }

    pub fn exceeds_threshold(&self) -> bool {
        self.statistical_parity().abs().max(self.equal_opportunity().abs()) > self.threshold
    }
}

/// Running joint frequencies of group and label for re-weighting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReweightTable {
    /// `[group][positive]`, group 0 = deprived.
    cells: [[f64; 2]; 2],
}

impl ReweightTable {
    pub fn new() -> Self {
        Self::default()
    }

    fn idx(group: Group) -> usize {
        match group {
            Group::Deprived => 0,
            Group::Favored => 1,
        }
    }

    pub fn observe(&mut self, group: Group, positive: bool) {
        self.cells[Self::idx(group)][usize::from(positive)] += 1.0;
    }

    pub fn set_count(&mut self, group: Group, positive: bool, count: f64) {
        self.cells[Self::idx(group)][usize::from(positive)] = count;
    }

    /// Expected over observed frequency of the `(group, label)` cell.
    pub fn weight(&self, group: Group, positive: bool) -> f64 {
        let total: f64 = self.cells.iter().flatten().sum();
        let (g, y) = (Self::idx(group), usize::from(positive));
        if total <= 0.0 || self.cells[g][y] <= 0.0 {
            return 1.0;
        }
        let p_group = (self.cells[g][0] + self.cells[g][1]) / total;
        let p_label = (self.cells[0][y] + self.cells[1][y]) / total;
        let p_joint = (self.cells[g][y] / total).max(1e-6);
        p_group * p_label / p_joint
    }
}

/// Weight of one labeled instance; instances outside both groups get 1.
pub fn reweight_instance(xi: &LabeledInstance, spec: &SensitiveSpec, table: &ReweightTable) -> f64 {
    match (spec.group_of(&xi.x), xi.y.class()) {
        (Some(g), Some(c)) => table.weight(g, c == spec.positive),
        _ => 1.0,
    }
}

/// Number of promotion/demotion pairs that best equalises group positive rates.
pub fn massage_count(
    favored_pos: usize,
    favored_n: usize,
    deprived_pos: usize,
    deprived_n: usize,
    max_pairs: usize,
) -> usize {
    if favored_n == 0 || deprived_n == 0 {
        return 0;
    }
    let gap = |m: usize| {
        (favored_pos as f64 - m as f64) / favored_n as f64 - (deprived_pos as f64 + m as f64) / deprived_n as f64
    };
    if gap(0) <= 0.0 {
        return 0;
    }
    let mut best = 0;
    for m in 1..=max_pairs {
        if gap(m).abs() < gap(best).abs() {
            best = m;
        } else {
            break;
        }
    }
    best
}

/// Relabels a chunk so both groups get (as nearly as possible) equal positive
/// rates. The ranker returns P(+|x); deprived negatives with the highest score
/// are promoted and favored positives with the lowest score demoted, pairwise.
/// Returns the number of pairs.
pub fn massage_chunk<F>(chunk: &mut [LabeledInstance], spec: &SensitiveSpec, ranker: F) -> usize
where
    F: Fn(&Instance) -> f64,
{
    let positive = |l: &Label| l.class() == Some(spec.positive);
    let mut promote = Vec::new();
    let mut demote = Vec::new();
    let (mut fav_n, mut fav_pos, mut dep_n, mut dep_pos) = (0, 0, 0, 0);
    for (i, xi) in chunk.iter().enumerate() {
        match spec.group_of(&xi.x) {
            Some(Group::Favored) => {
                fav_n += 1;
                if positive(&xi.y) {
                    fav_pos += 1;
                    demote.push((ranker(&xi.x), i));
                }
            }
            Some(Group::Deprived) => {
                dep_n += 1;
                if positive(&xi.y) {
                    dep_pos += 1;
                } else {
                    promote.push((ranker(&xi.x), i));
                }
            }
            None => {}
        }
    }
    let m = massage_count(fav_pos, fav_n, dep_pos, dep_n, promote.len().min(demote.len()));
    if m == 0 {
        return 0;
    }
    promote.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    demote.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let negative = negative_class(spec.positive);
    for &(_, i) in promote.iter().take(m) {
        chunk[i].y = Label::Class(spec.positive);
    }
    for &(_, i) in demote.iter().take(m) {
        chunk[i].y = Label::Class(negative);
    }
    m
}

fn negative_class(positive: ClassId) -> ClassId {
    if positive == ClassId(0) {
        ClassId(1)
    } else {
        ClassId(0)
    }
}

/// Point on the segment from `x` towards `neighbor`; categorical values come from `x`.
pub fn smote_interpolate(x: &Instance, neighbor: &Instance, u: f64) -> Instance {
    let mut out = Instance::with_capacity(x.len());
    for (name, value) in x.iter() {
        match (value, neighbor.get(name)) {
            (FeatureValue::Numeric(a), Some(FeatureValue::Numeric(b))) => out.insert(name, a + u * (b - a)),
            _ => out.insert(name, value.clone()),
        }
    }
    out
}

/// Euclidean distance over the numeric features both instances share.
pub fn shared_distance(a: &Instance, b: &Instance) -> f64 {
    a.numeric_features()
        .filter_map(|(k, va)| b.numeric(k).map(|vb| (va - vb).powi(2)))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CSmoteConfig {
    pub neighbors: usize,
    pub capacity: usize,
    /// Minority share (real plus synthetic) the window is topped up to.
    pub balance_target: f64,
    pub adwin: AdwinConfig,
    pub seed: u64,
}

impl Default for CSmoteConfig {
    fn default() -> Self {
        Self {
            neighbors: 5,
            capacity: 1000,
            balance_target: 0.5,
            adwin: AdwinConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct WindowEntry {
    xi: LabeledInstance,
    class: ClassId,
    /// Synthetic minority instances generated while this entry was newest.
    synthetic: usize,
}

/// Continuous SMOTE over a window whose length follows ADWIN on the label sequence.
#[derive(Debug, Clone)]
pub struct CSmote {
    cfg: CSmoteConfig,
    window: VecDeque<WindowEntry>,
    adwin: Adwin,
    rng: ChaCha8Rng,
    generated: u64,
}

impl CSmote {
    pub fn new(cfg: CSmoteConfig) -> Result<Self> {
        if cfg.neighbors == 0 || cfg.capacity < 2 {
            return Err(Error::Config("C-SMOTE needs k >= 1 and capacity >= 2".into()));
        }
        if !(cfg.balance_target > 0.0 && cfg.balance_target <= 0.5) {
            return Err(Error::Config("balance target must lie in (0, 0.5]".into()));
        }
        Ok(Self {
            adwin: Adwin::new(cfg.adwin)?,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            window: VecDeque::with_capacity(cfg.capacity),
            cfg,
            generated: 0,
        })
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn window(&self) -> impl Iterator<Item = &LabeledInstance> {
        self.window.iter().map(|e| &e.xi)
    }

    pub fn total_generated(&self) -> u64 {
        self.generated
    }

    /// Minority class of the window, ties broken towards class 1.
    pub fn minority_class(&self) -> Option<ClassId> {
        let ones = self.window.iter().filter(|e| e.class == ClassId(1)).count();
        let zeros = self.window.len() - ones;
        if self.window.is_empty() {
            None
        } else if ones <= zeros {
            Some(ClassId(1))
        } else {
            Some(ClassId(0))
        }
    }

    /// Feeds `xi` to the learner, updates the window and tops up the minority
    /// class with synthetic instances. Returns how many were generated.
    pub fn step(&mut self, xi: &LabeledInstance, learner: &mut dyn Estimator) -> Result<usize> {
        let class =
            xi.y.class()
                .filter(|c| c.0 <= 1)
                .ok_or_else(|| Error::Value("C-SMOTE expects binary class labels".into()))?;
        learner.learn_one(&xi.x, Some(&xi.y))?;

        let state = self.adwin.update(f64::from(class.0))?;
        self.window.push_back(WindowEntry {
            xi: xi.clone(),
            class,
            synthetic: 0,
        });
        let keep = (self.adwin.width() as usize).min(self.cfg.capacity);
        while self.window.len() > keep {
            self.window.pop_front();
        }
        debug_assert!(state != DriftState::Change || self.window.len() as u64 <= self.adwin.width());

        let Some(minority) = self.minority_class() else {
            return Ok(0);
        };
        let minority_idx: Vec<usize> = self
            .window
            .iter()
            .enumerate()
            .filter(|(_, e)| e.class == minority)
            .map(|(i, _)| i)
            .collect();
        if minority_idx.len() < 2 {
            return Ok(0);
        }
        let synthetic: usize = self.window.iter().map(|e| e.synthetic).sum();
        let real_min = minority_idx.len() as f64;
        let n = self.window.len() as f64;
        let target = self.cfg.balance_target;
        let have = real_min + synthetic as f64;
        let total = n + synthetic as f64;
        if have / total >= target {
            return Ok(0);
        }
        let needed = ((target * total - have) / (1.0 - target)).ceil() as usize;

        let k = self.cfg.neighbors.min(minority_idx.len() - 1);
        let label = Label::Class(minority);
        for _ in 0..needed {
            let pick = minority_idx[self.rng.random_range(0..minority_idx.len())];
            let base = &self.window[pick].xi.x;
            let mut dists: Vec<(f64, usize)> = minority_idx
                .iter()
                .filter(|&&j| j != pick)
                .map(|&j| (shared_distance(base, &self.window[j].xi.x), j))
                .collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let nb = dists[self.rng.random_range(0..k)].1;
            let u: f64 = self.rng.random();
            let synth = smote_interpolate(base, &self.window[nb].xi.x, u);
            learner.learn_one(&synth, Some(&label))?;
        }
        if let Some(last) = self.window.back_mut() {
            last.synthetic += needed;
        }
        self.generated += needed as u64;
        Ok(needed)
    }
}

/// Learner wrapper scaling each update by its re-weighting factor, computed
/// from the group/label frequencies seen so far (the current instance included).
#[derive(Debug, Clone)]
pub struct Reweighing<E> {
    inner: E,
    spec: SensitiveSpec,
    table: ReweightTable,
    name: String,
}

impl<E: Estimator> Reweighing<E> {
    pub fn new(inner: E, spec: SensitiveSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            name: format!("Reweighing({})", inner.name()),
            inner,
            spec,
            table: ReweightTable::new(),
        })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn table(&self) -> &ReweightTable {
        &self.table
    }
}

impl<E: Estimator> Estimator for Reweighing<E> {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn learn_one(&mut self, x: &Instance, y: Option<&Label>) -> Result<()> {
        let key = self
            .spec
            .group_of(x)
            .zip(y.and_then(Label::class))
            .map(|(g, c)| (g, c == self.spec.positive));
        let weight = match key {
            Some((g, pos)) => {
                self.table.observe(g, pos);
                self.table.weight(g, pos)
            }
            None => 1.0,
        };
        self.inner.learn_weighted(x, y, weight)
    }

    fn predict_one(&self, x: &Instance) -> Result<Prediction> {
        self.inner.predict_one(x)
    }

    fn predict_proba_one(&self, x: &Instance) -> Result<ClassDistribution> {
        self.inner.predict_proba_one(x)
    }

    fn memory_bytes(&self) -> usize {
        self.inner.memory_bytes() + std::mem::size_of::<ReweightTable>()
    }

    fn state_checksum(&self) -> u64 {
        let mut h = StateHasher::new();
        h.u64(self.inner.state_checksum());
        for v in self.table.cells.iter().flatten() {
            h.f64(*v);
        }
        h.finish()
    }
}

/// Learner wrapper that buffers a chunk, massages it with a prequentially
/// trained ranker and then teaches the chunk to the inner learner.
#[derive(Debug, Clone)]
pub struct Massaging<E> {
    inner: E,
    ranker: HoeffdingTree,
    spec: SensitiveSpec,
    chunk: Vec<LabeledInstance>,
    chunk_size: usize,
    relabeled: u64,
    name: String,
}

impl<E: Estimator> Massaging<E> {
    pub fn new(inner: E, spec: SensitiveSpec, chunk_size: usize) -> Result<Self> {
        spec.validate()?;
        if chunk_size == 0 {
            return Err(Error::Config("chunk size must be at least 1".into()));
        }
        Ok(Self {
            name: format!("Massaging({})", inner.name()),
            inner,
            ranker: HoeffdingTree::default(),
            spec,
            chunk: Vec::with_capacity(chunk_size),
            chunk_size,
            relabeled: 0,
        })
    }

    /// Promotion/demotion pairs applied so far.
    pub fn relabeled_pairs(&self) -> u64 {
        self.relabeled
    }

    fn flush(&mut self) -> Result<()> {
        let positive = self.spec.positive;
        let ranker = &self.ranker;
        let pairs = massage_chunk(&mut self.chunk, &self.spec, |x| {
            ranker.predict_proba_one(x).map_or(0.0, |d| d.get(positive))
        });
        self.relabeled += pairs as u64;
        for xi in self.chunk.drain(..) {
            self.inner.learn_one(&xi.x, Some(&xi.y))?;
        }
        Ok(())
    }
}

impl<E: Estimator> Estimator for Massaging<E> {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn learn_one(&mut self, x: &Instance, y: Option<&Label>) -> Result<()> {
        let y = *y.ok_or_else(|| Error::Value("massaging needs labels".into()))?;
        self.ranker.learn_one(x, Some(&y))?;
        self.chunk.push(LabeledInstance::new(x.clone(), y));
        if self.chunk.len() == self.chunk_size {
            self.flush()?;
        }
        Ok(())
    }

    fn predict_one(&self, x: &Instance) -> Result<Prediction> {
        self.inner.predict_one(x)
    }

    fn predict_proba_one(&self, x: &Instance) -> Result<ClassDistribution> {
        self.inner.predict_proba_one(x)
    }

    fn memory_bytes(&self) -> usize {
        let per_instance = self
            .chunk
            .first()
            .map_or(0, |xi| xi.x.iter().map(|(k, _)| k.len() + 32).sum::<usize>());
        self.inner.memory_bytes() + self.ranker.memory_bytes() + self.chunk_size * per_instance
    }

    fn state_checksum(&self) -> u64 {
        let mut h = StateHasher::new();
        h.u64(self.inner.state_checksum())
            .u64(self.ranker.state_checksum())
            .u64(self.chunk.len() as u64)
            .u64(self.relabeled);
        h.finish()
    }
}

/// Learner wrapper feeding every instance through [`CSmote`].
#[derive(Debug, Clone)]
pub struct CSmoteLearner<E> {
    inner: E,
    smote: CSmote,
    name: String,
}

impl<E: Estimator> CSmoteLearner<E> {
    pub fn new(inner: E, cfg: CSmoteConfig) -> Result<Self> {
        Ok(Self {
            name: format!("CSmote({})", inner.name()),
            inner,
            smote: CSmote::new(cfg)?,
        })
    }

    pub fn smote(&self) -> &CSmote {
        &self.smote
    }
}

impl<E: Estimator> Estimator for CSmoteLearner<E> {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn learn_one(&mut self, x: &Instance, y: Option<&Label>) -> Result<()> {
        let y = *y.ok_or_else(|| Error::Value("C-SMOTE needs labels".into()))?;
        self.smote
            .step(&LabeledInstance::new(x.clone(), y), &mut self.inner)
            .map(|_| ())
    }

    fn predict_one(&self, x: &Instance) -> Result<Prediction> {
        self.inner.predict_one(x)
    }

    fn predict_proba_one(&self, x: &Instance) -> Result<ClassDistribution> {
        self.inner.predict_proba_one(x)
    }

    fn memory_bytes(&self) -> usize {
        let per_instance = self
            .smote
            .window()
            .next()
            .map_or(0, |xi| xi.x.iter().map(|(k, _)| k.len() + 32).sum::<usize>());
        self.inner.memory_bytes() + self.smote.cfg.capacity * per_instance + self.smote.adwin.memory_bytes()
    }

    fn state_checksum(&self) -> u64 {
        let mut h = StateHasher::new();
        h.u64(self.inner.state_checksum())
            .u64(self.smote.window_len() as u64)
            .u64(self.smote.total_generated());
        h.finish()
    }
}
