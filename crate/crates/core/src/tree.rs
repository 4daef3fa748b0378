//! Hoeffding tree classifier.
//!
//! Leaves keep per-class counts, per-class Gaussian estimators for numeric
//! features and per-value class counts for categorical features. A leaf tries
//! to split every `grace_period` units of weight; the split is installed when
//! the Hoeffding bound separates the best candidate from the runner-up, or
//! when the bound drops below the tie threshold.
//!
//! With a [`SensitiveSpec`] configured the tree scores candidates with the
//! fair information gain: information gain modulated by how much a split
//! reduces statistical-parity discrimination of the labels at the node.
//! A fair tree never splits on the sensitive feature itself: a child holding
//! a single group has no measurable discrimination, so such splits would
//! collect the full fairness gain while separating the groups outright.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::fairness::{Group, SensitiveSpec};
use crate::stream::{Capabilities, ClassDistribution, ClassId, Estimator, FeatureValue, Instance, Label, StateHasher};

#[derive(Debug, Clone, PartialEq)]
pub struct HoeffdingTreeConfig {
    /// Split confidence, the probability of choosing the wrong split.
    pub split_confidence: f64,
    /// Weight a leaf accumulates between split attempts.
    pub grace_period: f64,
    pub tie_threshold: f64,
    pub max_node_count: usize,
    /// Candidate thresholds per numeric feature.
    pub numeric_thresholds: usize,
    /// Enables fairness-aware split scoring.
    pub sensitive: Option<SensitiveSpec>,
}

impl Default for HoeffdingTreeConfig {
    fn default() -> Self {
        Self {
            split_confidence: 1e-7,
            grace_period: 200.0,
            tie_threshold: 0.05,
            max_node_count: 2048,
            numeric_thresholds: 10,
            sensitive: None,
        }
    }
}

impl HoeffdingTreeConfig {
    pub fn fair(sensitive: SensitiveSpec) -> Self {
        Self {
            sensitive: Some(sensitive),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_confidence > 0.0 && self.split_confidence < 1.0) {
            return Err(Error::Config("split_confidence must lie in (0, 1)".into()));
        }
        if self.grace_period < 1.0 {
            return Err(Error::Config("grace_period must be at least 1".into()));
        }
        if self.tie_threshold < 0.0 {
            return Err(Error::Config("tie_threshold must be non-negative".into()));
        }
        if self.max_node_count < 1 {
            return Err(Error::Config("max_node_count must be at least 1".into()));
        }
        if self.numeric_thresholds < 1 {
            return Err(Error::Config("need at least one numeric threshold".into()));
        }
        if let Some(s) = &self.sensitive {
            s.validate()?;
        }
        Ok(())
    }
}

/// Hoeffding bound `sqrt(R² ln(1/δ) / 2n)`.
pub fn hoeffding_bound(range: f64, confidence: f64, n: f64) -> Result<f64> {
    if n < 1.0 {
        return Err(Error::Domain(format!("Hoeffding bound needs n >= 1, got {n}")));
    }
    if range <= 0.0 {
        return Err(Error::Domain(format!("Hoeffding bound needs R > 0, got {range}")));
    }
    Ok((range * range * (1.0 / confidence).ln() / (2.0 * n)).sqrt())
}

/// Shannon entropy in bits of a vector of non-negative counts.
pub fn entropy(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|c| **c > 0.0)
        .map(|c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

fn check_partition(parent: &[f64], children: &[Vec<f64>]) -> Result<()> {
    let total: f64 = parent.iter().sum();
    let tol = 1e-9 * total.max(1.0);
    for (i, p) in parent.iter().enumerate() {
        let s: f64 = children.iter().map(|c| c.get(i).copied().unwrap_or(0.0)).sum();
        if (s - p).abs() > tol {
            return Err(Error::Contract(format!(
                "children do not partition the parent at index {i}: {s} vs {p}"
            )));
        }
    }
    if children.iter().any(|c| c.len() > parent.len()) {
        return Err(Error::Contract("child has more classes than parent".into()));
    }
    Ok(())
}

/// Information gain in bits of splitting `parent` into `children`.
pub fn compute_info_gain(parent: &[f64], children: &[Vec<f64>]) -> Result<f64> {
    check_partition(parent, children)?;
    let total: f64 = parent.iter().sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let weighted: f64 = children
        .iter()
        .map(|c| c.iter().sum::<f64>() / total * entropy(c))
        .sum();
    Ok((entropy(parent) - weighted).max(0.0))
}

/// Weighted (group, label) counts at a node. Index 1 is the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GroupLabelCounts {
    pub favored: [f64; 2],
    pub deprived: [f64; 2],
}

impl GroupLabelCounts {
    pub fn add(&mut self, group: Group, positive: bool, w: f64) {
        let row = match group {
            Group::Favored => &mut self.favored,
            Group::Deprived => &mut self.deprived,
        };
        row[usize::from(positive)] += w;
    }

    pub fn total(&self) -> f64 {
        self.favored[0] + self.favored[1] + self.deprived[0] + self.deprived[1]
    }

    fn sub(&self, other: &Self) -> Self {
        Self {
            favored: [self.favored[0] - other.favored[0], self.favored[1] - other.favored[1]],
            deprived: [
                self.deprived[0] - other.deprived[0],
                self.deprived[1] - other.deprived[1],
            ],
        }
    }

    /// Parity gap when each group is assigned its majority label in the node:
    /// 1 if exactly one group has a positive majority, else 0. A node missing
    /// either group has no gap.
    pub fn discrimination(&self) -> f64 {
        let nf = self.favored[0] + self.favored[1];
        let nd = self.deprived[0] + self.deprived[1];
        if nf <= 0.0 || nd <= 0.0 {
            return 0.0;
        }
        let fav_pos = self.favored[1] > self.favored[0];
        let dep_pos = self.deprived[1] > self.deprived[0];
        if fav_pos == dep_pos {
            0.0
        } else {
            1.0
        }
    }

    fn cells(&self) -> [f64; 4] {
        [self.favored[0], self.favored[1], self.deprived[0], self.deprived[1]]
    }
}

/// Reduction of discrimination achieved by a split; may be negative.
pub fn compute_fairness_gain(parent: &GroupLabelCounts, children: &[GroupLabelCounts]) -> Result<f64> {
    let p = parent.cells();
    let tol = 1e-9 * parent.total().max(1.0);
    for (i, &pi) in p.iter().enumerate() {
        let s: f64 = children.iter().map(|c| c.cells()[i]).sum();
        if (s - pi).abs() > tol {
            return Err(Error::Contract(
                "children do not partition the parent group/label counts".into(),
            ));
        }
    }
    let total = parent.total();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let weighted: f64 = children.iter().map(|c| c.total() / total * c.discrimination()).sum();
    Ok(parent.discrimination() - weighted)
}

/// Split merit combining information gain and fairness gain.
pub fn fair_information_gain(info_gain: f64, fairness_gain: f64) -> f64 {
    (info_gain * (1.0 + fairness_gain)).max(0.0)
}

/// Decides whether the best candidate can be installed.
pub fn should_split(best: f64, second: f64, epsilon: f64, tie_threshold: f64) -> bool {
    best > 0.0 && (best - second > epsilon || epsilon < tie_threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitTest {
    /// Left branch when the value is at most the threshold; missing goes right.
    Threshold(f64),
    /// Left branch when the categorical value equals this one.
    Equals(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSuggestion {
    pub feature: String,
    pub test: SplitTest,
    pub info_gain: f64,
    pub fairness_gain: f64,
    pub merit: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Gaussian {
    weight: f64,
    mean: f64,
    m2: f64,
}

impl Gaussian {
    fn update(&mut self, v: f64, w: f64) {
        self.weight += w;
        let delta = v - self.mean;
        self.mean += delta * w / self.weight;
        self.m2 += w * delta * (v - self.mean);
    }

    fn std(&self) -> f64 {
        if self.weight <= 1.0 {
            0.0
        } else {
            (self.m2 / (self.weight - 1.0)).max(0.0).sqrt()
        }
    }

    /// Estimated weight at or below `t`.
    fn weight_below(&self, t: f64) -> f64 {
        let s = self.std();
        let frac = if s <= 1e-12 {
            if t >= self.mean {
                1.0
            } else {
                0.0
            }
        } else {
            0.5 * erfc(-(t - self.mean) / (s * std::f64::consts::SQRT_2))
        };
        self.weight * frac
    }
}

#[derive(Debug, Clone, Default)]
struct NumericObserver {
    min: f64,
    max: f64,
    per_class: BTreeMap<ClassId, Gaussian>,
    per_group_label: BTreeMap<(Group, bool), Gaussian>,
}

#[derive(Debug, Clone, Default)]
struct CategoricalObserver {
    per_value: IndexMap<String, BTreeMap<ClassId, f64>>,
    per_value_group: IndexMap<String, GroupLabelCounts>,
}

#[derive(Debug, Clone, Default)]
struct LeafStats {
    class_counts: BTreeMap<ClassId, f64>,
    numeric: IndexMap<String, NumericObserver>,
    categorical: IndexMap<String, CategoricalObserver>,
    joint: GroupLabelCounts,
    weight: f64,
    weight_at_last_attempt: f64,
}

impl LeafStats {
    fn learn(&mut self, x: &Instance, class: ClassId, w: f64, fair: Option<(Group, bool)>) {
        *self.class_counts.entry(class).or_insert(0.0) += w;
        self.weight += w;
        if let Some((g, pos)) = fair {
            self.joint.add(g, pos, w);
        }
        for (name, value) in x.iter() {
            match value {
                FeatureValue::Numeric(v) => {
                    let obs = self.numeric.entry(name.to_string()).or_insert_with(|| NumericObserver {
                        min: *v,
                        max: *v,
                        ..NumericObserver::default()
                    });
                    obs.min = obs.min.min(*v);
                    obs.max = obs.max.max(*v);
                    obs.per_class.entry(class).or_default().update(*v, w);
                    if let Some(key) = fair {
                        obs.per_group_label.entry(key).or_default().update(*v, w);
                    }
                }
                FeatureValue::Categorical(s) => {
                    let obs = self.categorical.entry(name.to_string()).or_default();
                    *obs.per_value.entry(s.clone()).or_default().entry(class).or_insert(0.0) += w;
                    if let Some((g, pos)) = fair {
                        obs.per_value_group.entry(s.clone()).or_default().add(g, pos, w);
                    }
                }
            }
        }
    }

    fn memory_bytes(&self) -> usize {
        let gauss = std::mem::size_of::<Gaussian>() + 8;
        let num: usize = self
            .numeric
            .iter()
            .map(|(k, o)| k.len() + 16 + (o.per_class.len() + o.per_group_label.len()) * gauss)
            .sum();
        let cat: usize = self
            .categorical
            .iter()
            .map(|(k, o)| {
                k.len()
                    + o.per_value.iter().map(|(v, m)| v.len() + m.len() * 16).sum::<usize>()
                    + o.per_value_group.len() * std::mem::size_of::<GroupLabelCounts>()
            })
            .sum();
        std::mem::size_of::<Self>() + self.class_counts.len() * 16 + num + cat
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Box<LeafStats>),
    Split {
        feature: String,
        test: SplitTest,
        left: usize,
        right: usize,
    },
}

/// Incremental decision tree. Nodes live in an arena; the root is index 0.
#[derive(Debug, Clone)]
pub struct HoeffdingTree {
    cfg: HoeffdingTreeConfig,
    nodes: Vec<Node>,
    classes: BTreeSet<ClassId>,
    name: String,
}

impl Default for HoeffdingTree {
    fn default() -> Self {
        Self::new(HoeffdingTreeConfig::default()).expect("default config is valid")
    }
}

impl HoeffdingTree {
    pub fn new(cfg: HoeffdingTreeConfig) -> Result<Self> {
        cfg.validate()?;
        let name = if cfg.sensitive.is_some() {
            "FairHoeffdingTree"
        } else {
            "HoeffdingTree"
        };
        Ok(Self {
            cfg,
            nodes: vec![Node::Leaf(Box::default())],
            classes: BTreeSet::new(),
            name: name.to_string(),
        })
    }

    pub fn config(&self) -> &HoeffdingTreeConfig {
        &self.cfg
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    /// Installed splits in arena order.
    pub fn splits(&self) -> Vec<(String, SplitTest)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, test, .. } => Some((feature.clone(), test.clone())),
                Node::Leaf(_) => None,
            })
            .collect()
    }

    /// Class counts of the leaf `x` is routed to.
    pub fn leaf_class_counts(&self, x: &Instance) -> BTreeMap<ClassId, f64> {
        self.leaf_stats(self.route(x)).class_counts.clone()
    }

    fn leaf_stats(&self, idx: usize) -> &LeafStats {
        match &self.nodes[idx] {
            Node::Leaf(s) => s,
            Node::Split { .. } => unreachable!("route always ends in a leaf"),
        }
    }

    fn route(&self, x: &Instance) -> usize {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf(_) => return idx,
                Node::Split {
                    feature,
                    test,
                    left,
                    right,
                } => {
                    let go_left = match (test, x.get(feature)) {
                        (SplitTest::Threshold(t), Some(FeatureValue::Numeric(v))) => v <= t,
                        (SplitTest::Equals(s), Some(FeatureValue::Categorical(v))) => v == s,
                        _ => false,
                    };
                    idx = if go_left { *left } else { *right };
                }
            }
        }
    }

    fn fairness_key(&self, x: &Instance, class: ClassId) -> Option<(Group, bool)> {
        let spec = self.cfg.sensitive.as_ref()?;
        spec.group_of(x).map(|g| (g, class == spec.positive))
    }

    /// Scores every candidate split of a leaf, best first.
    fn suggestions(&self, stats: &LeafStats) -> Vec<SplitSuggestion> {
        let classes: Vec<ClassId> = stats.class_counts.keys().copied().collect();
        let parent: Vec<f64> = classes.iter().map(|c| stats.class_counts[c]).collect();
        let fair = self.cfg.sensitive.is_some();
        // (info gain, fairness gain) of a binary split given its left branch
        let gains = |left: &[f64], left_joint: Option<GroupLabelCounts>| {
            let right: Vec<f64> = parent.iter().zip(left).map(|(p, l)| (p - l).max(0.0)).collect();
            // clamp rounding so the children still partition the parent
            let left: Vec<f64> = parent.iter().zip(&right).map(|(p, r)| p - r).collect();
            let ig = compute_info_gain(&parent, &[left, right]).unwrap_or(0.0);
            let fg = left_joint.map_or(0.0, |lj| {
                let rj = stats.joint.sub(&lj);
                compute_fairness_gain(&stats.joint, &[lj, rj]).unwrap_or(0.0)
            });
            (ig, fg)
        };
        let score = |left: &[f64], left_joint: Option<GroupLabelCounts>| {
            let (ig, fg) = gains(left, left_joint);
            if fair {
                fair_information_gain(ig, fg)
            } else {
                ig
            }
        };
        let mut out = Vec::new();
        let mut push = |feature: &str, test: SplitTest, left: Vec<f64>, left_joint: Option<GroupLabelCounts>| {
            let (ig, fg) = gains(&left, left_joint);
            let merit = if fair { fair_information_gain(ig, fg) } else { ig };
            out.push(SplitSuggestion {
                feature: feature.to_string(),
                test,
                info_gain: ig,
                fairness_gain: fg,
                merit,
            });
        };

        for (name, obs) in &stats.numeric {
            if obs.max <= obs.min {
                continue;
            }
            let k = self.cfg.numeric_thresholds;
            let mut best: Option<(f64, Vec<f64>, Option<GroupLabelCounts>, f64)> = None;
            for i in 1..=k {
                let t = obs.min + (obs.max - obs.min) * i as f64 / (k + 1) as f64;
                let left: Vec<f64> = classes
                    .iter()
                    .map(|c| obs.per_class.get(c).map_or(0.0, |g| g.weight_below(t)))
                    .collect();
                let lj = fair.then(|| {
                    let mut j = GroupLabelCounts::default();
                    for (&(g, pos), gauss) in &obs.per_group_label {
                        j.add(g, pos, gauss.weight_below(t));
                    }
                    j
                });
                let merit = score(&left, lj);
                if best.as_ref().is_none_or(|b| merit > b.3) {
                    best = Some((t, left, lj, merit));
                }
            }
            if let Some((t, left, lj, _)) = best {
                push(name, SplitTest::Threshold(t), left, lj);
            }
        }

        // one candidate per feature: the best value test
        let sensitive = self.cfg.sensitive.as_ref().map(|s| s.feature.as_str());
        for (name, obs) in &stats.categorical {
            if Some(name.as_str()) == sensitive {
                continue;
            }
            let mut best: Option<(f64, &String, Vec<f64>, Option<GroupLabelCounts>)> = None;
            for (value, counts) in &obs.per_value {
                let left: Vec<f64> = classes.iter().map(|c| counts.get(c).copied().unwrap_or(0.0)).collect();
                let lj = fair.then(|| obs.per_value_group.get(value).copied().unwrap_or_default());
                let merit = score(&left, lj);
                if best.as_ref().is_none_or(|b| merit > b.0) {
                    best = Some((merit, value, left, lj));
                }
            }
            if let Some((_, value, left, lj)) = best {
                push(name, SplitTest::Equals(value.clone()), left, lj);
            }
        }

        out.sort_by(|a, b| b.merit.total_cmp(&a.merit));
        out
    }

    fn attempt_split(&mut self, leaf_idx: usize) {
        if self.nodes.len() + 2 > self.cfg.max_node_count {
            return;
        }
        let stats = match &self.nodes[leaf_idx] {
            Node::Leaf(s) => s,
            Node::Split { .. } => return,
        };
        if stats.class_counts.len() < 2 {
            return;
        }
        let candidates = self.suggestions(stats);
        let Some(best) = candidates.first() else {
            return;
        };
        let second = candidates.get(1).map_or(0.0, |s| s.merit);
        let range = (stats.class_counts.len() as f64).log2().max(1.0);
        let Ok(eps) = hoeffding_bound(range, self.cfg.split_confidence, stats.weight) else {
            return;
        };
        if !should_split(best.merit, second, eps, self.cfg.tie_threshold) {
            return;
        }
        let (feature, test) = (best.feature.clone(), best.test.clone());
        let left = self.nodes.len();
        self.nodes.push(Node::Leaf(Box::default()));
        self.nodes.push(Node::Leaf(Box::default()));
        self.nodes[leaf_idx] = Node::Split {
            feature,
            test,
            left,
            right: left + 1,
        };
    }

    /// Candidate splits of the leaf `x` falls into, best first.
    pub fn split_suggestions(&self, x: &Instance) -> Vec<SplitSuggestion> {
        self.suggestions(self.leaf_stats(self.route(x)))
    }
}

impl Estimator for HoeffdingTree {
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
            .ok_or_else(|| Error::Value("Hoeffding tree needs a class label".into()))?;
        if class == ClassId::UNKNOWN {
            return Err(Error::Value("the unknown class cannot be learned".into()));
        }
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::Value(format!("invalid instance weight {weight}")));
        }
        x.validate()?;
        if weight == 0.0 {
            return Ok(());
        }
        self.classes.insert(class);
        let fair = self.fairness_key(x, class);
        let idx = self.route(x);
        let ready = match &mut self.nodes[idx] {
            Node::Leaf(stats) => {
                stats.learn(x, class, weight, fair);
                if stats.weight - stats.weight_at_last_attempt >= self.cfg.grace_period {
                    stats.weight_at_last_attempt = stats.weight;
                    true
                } else {
                    false
                }
            }
            Node::Split { .. } => unreachable!("route always ends in a leaf"),
        };
        if ready {
            self.attempt_split(idx);
        }
        Ok(())
    }

    fn predict_proba_one(&self, x: &Instance) -> Result<ClassDistribution> {
        if self.classes.is_empty() {
            return Ok(ClassDistribution::cold_start());
        }
        let counts = &self.leaf_stats(self.route(x)).class_counts;
        Ok(ClassDistribution::from_weights(
            self.classes
                .iter()
                .map(|c| (*c, counts.get(c).copied().unwrap_or(0.0) + 1.0)),
        ))
    }

    fn memory_bytes(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Leaf(s) => s.memory_bytes(),
                Node::Split { feature, .. } => std::mem::size_of::<Node>() + feature.len(),
            })
            .sum()
    }

    fn state_checksum(&self) -> u64 {
        let mut h = StateHasher::new();
        for n in &self.nodes {
            match n {
                Node::Leaf(s) => {
                    h.u64(0).f64(s.weight);
                    for (c, w) in &s.class_counts {
                        h.u64(u64::from(c.0)).f64(*w);
                    }
                }
                Node::Split {
                    feature,
                    test,
                    left,
                    right,
                } => {
                    h.u64(1).str(feature).u64(*left as u64).u64(*right as u64);
                    match test {
                        SplitTest::Threshold(t) => h.f64(*t),
                        SplitTest::Equals(s) => h.str(s),
                    };
                }
            }
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn class(c: u32) -> Label {
        Label::Class(ClassId(c))
    }

    #[test]
    fn info_gain_examples() {
        assert!((compute_info_gain(&[5.0, 5.0], &[vec![5.0, 0.0], vec![0.0, 5.0]]).unwrap() - 1.0).abs() < 1e-12);
        assert!(
            compute_info_gain(&[4.0, 8.0], &[vec![1.0, 2.0], vec![3.0, 6.0]])
                .unwrap()
                .abs()
                < 1e-12
        );
        // H(8,4) = 0.918296, H(6,1) = 0.591673, H(2,3) = 0.970951
        let h = |a: f64, b: f64| {
            let n = a + b;
            -(a / n) * (a / n).log2() - (b / n) * (b / n).log2()
        };
        let expected = h(8.0, 4.0) - 7.0 / 12.0 * h(6.0, 1.0) - 5.0 / 12.0 * h(2.0, 3.0);
        let ig = compute_info_gain(&[8.0, 4.0], &[vec![6.0, 1.0], vec![2.0, 3.0]]).unwrap();
        assert!((ig - expected).abs() < 1e-12);
        assert!((ig - 0.168_590_632).abs() < 1e-9);
    }

    #[test]
    fn info_gain_rejects_non_partition() {
        assert!(matches!(
            compute_info_gain(&[5.0, 5.0], &[vec![5.0, 0.0], vec![0.0, 4.0]]),
            Err(Error::Contract(_))
        ));
    }

    fn joint(fav: [f64; 2], dep: [f64; 2]) -> GroupLabelCounts {
        GroupLabelCounts {
            favored: fav,
            deprived: dep,
        }
    }

    #[test]
    fn fairness_gain_examples() {
        // zero discrimination preserved
        let p = joint([5.0, 5.0], [5.0, 5.0]);
        let fg = compute_fairness_gain(&p, &[joint([2.0, 2.0], [3.0, 3.0]), joint([3.0, 3.0], [2.0, 2.0])]).unwrap();
        assert_eq!(fg, 0.0);

        // children mirroring a discriminatory parent
        let p = joint([2.0, 8.0], [8.0, 2.0]);
        let fg = compute_fairness_gain(&p, &[joint([1.0, 4.0], [4.0, 1.0]), joint([1.0, 4.0], [4.0, 1.0])]).unwrap();
        assert!(fg.abs() < 1e-12);

        assert!(compute_fairness_gain(&p, &[joint([1.0, 4.0], [4.0, 1.0])]).is_err());
    }

    /// Enumerates the 2x2 tables of a deprived group that never has a positive
    /// majority and a split isolating it into a positive-majority leaf.
    #[test]
    fn isolating_a_group_reduces_discrimination() {
        for fav_pos in 1..=6 {
            for dep_pos in 0..=2 {
                let fav = [(6 - fav_pos) as f64, fav_pos as f64];
                let dep_in = [1.0, 2.0];
                let dep_out = [4.0, dep_pos as f64];
                let parent = joint(fav, [dep_in[0] + dep_out[0], dep_in[1] + dep_out[1]]);
                // deprived majority is negative in the parent
                assert!(parent.deprived[1] < parent.deprived[0]);
                let children = [joint([0.0, 0.0], dep_in), joint(fav, dep_out)];
                let before = parent.discrimination();
                let after: f64 = children
                    .iter()
                    .map(|c| c.total() / parent.total() * c.discrimination())
                    .sum();
                let fg = compute_fairness_gain(&parent, &children).unwrap();
                assert!((fg - (before - after)).abs() < 1e-12);
                if before > 0.0 && after < before {
                    assert!(fg > 0.0);
                }
            }
        }
        let parent = joint([0.0, 5.0], [5.0, 2.0]);
        let fg =
            compute_fairness_gain(&parent, &[joint([0.0, 0.0], [1.0, 2.0]), joint([0.0, 5.0], [4.0, 0.0])]).unwrap();
        assert!(fg > 0.0);
    }

    #[test]
    fn fig_examples() {
        assert_eq!(fair_information_gain(1.0, 0.0), 1.0);
        assert_eq!(fair_information_gain(0.5, 1.0), 1.0);
        assert_eq!(fair_information_gain(0.5, -1.0), 0.0);
    }

    #[test]
    fn hoeffding_bound_examples() {
        let e = hoeffding_bound(1.0, 1e-7, 100.0).unwrap();
        assert!((e - 0.283_884_621_377_755_5).abs() < 1e-12, "{e}");
        assert!((e - 0.28386).abs() < 5e-5);
        let e4 = hoeffding_bound(1.0, 1e-7, 400.0).unwrap();
        assert!((e4 - e / 2.0).abs() < 1e-15);
        assert_eq!(hoeffding_bound(1.0, 1.0, 10.0).unwrap(), 0.0);
        assert!(matches!(hoeffding_bound(1.0, 0.1, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn split_decision_examples() {
        assert!(should_split(1.0, 0.0, 0.2, 0.05));
        assert!(!should_split(0.50, 0.49, 0.2, 0.05));
        assert!(should_split(0.3, 0.3, 0.01, 0.05));
        assert!(!should_split(0.0, 0.0, 0.01, 0.05));
    }

    #[test]
    fn first_instance_lands_in_root() {
        let mut t = HoeffdingTree::default();
        let x = Instance::from_numeric([("a", 0.3)]);
        assert_eq!(t.predict_proba_one(&x).unwrap(), ClassDistribution::cold_start());
        t.learn_one(&x, Some(&class(1))).unwrap();
        assert_eq!(t.leaf_class_counts(&x).get(&ClassId(1)), Some(&1.0));
        assert!(t.learn_one(&x, None).is_err());
    }

    #[test]
    fn smoothed_leaf_distribution() {
        let mut t = HoeffdingTree::default();
        let x = Instance::from_numeric([("a", 0.3)]);
        for i in 0..10 {
            t.learn_one(&x, Some(&class(u32::from(i == 0)))).unwrap();
        }
        let d = t.predict_proba_one(&x).unwrap();
        assert!((d.get(ClassId(0)) - 10.0 / 12.0).abs() < 1e-12);

        let mut t = HoeffdingTree::default();
        for i in 0..10 {
            t.learn_one(&x, Some(&class(i % 2))).unwrap();
        }
        let d = t.predict_proba_one(&x).unwrap();
        assert_eq!(d.get(ClassId(0)), d.get(ClassId(1)));
    }

    #[test]
    fn single_class_stream_never_splits() {
        let mut t = HoeffdingTree::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let x = Instance::from_numeric([("a", rng.random()), ("b", rng.random())]);
            t.learn_one(&x, Some(&class(3))).unwrap();
        }
        assert_eq!(t.node_count(), 1);
    }

    #[test]
    fn separable_concept_is_learned() {
        let mut t = HoeffdingTree::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut correct = 0;
        let mut seen = 0;
        for i in 0..5000 {
            let a: f64 = rng.random();
            let x = Instance::from_numeric([("a", a), ("noise", rng.random())]);
            let y = ClassId(u32::from(a > 0.5));
            if i >= 1000 {
                seen += 1;
                if t.predict_proba_one(&x).unwrap().argmax() == y {
                    correct += 1;
                }
            }
            t.learn_one(&x, Some(&Label::Class(y))).unwrap();
            if i == 999 {
                assert!(t.splits().iter().any(|(f, _)| f == "a"));
            }
        }
        assert!(correct as f64 / seen as f64 >= 0.95);
    }

    #[test]
    fn categorical_splits() {
        let mut t = HoeffdingTree::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let red = rng.random_bool(0.5);
            let mut x = Instance::new();
            x.insert("color", if red { "red" } else { "blue" });
            t.learn_one(&x, Some(&class(u32::from(red)))).unwrap();
        }
        assert!(matches!(t.splits().first(), Some((f, SplitTest::Equals(_))) if f == "color"));
        let mut x = Instance::new();
        x.insert("color", "red");
        assert_eq!(t.predict_one(&x).unwrap(), crate::Prediction::ClassLabel(ClassId(1)));
    }

    #[test]
    fn node_budget_is_respected() {
        let cfg = HoeffdingTreeConfig {
            max_node_count: 7,
            grace_period: 50.0,
            ..HoeffdingTreeConfig::default()
        };
        let mut t = HoeffdingTree::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20_000 {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let x = Instance::from_numeric([("a", a), ("b", b)]);
            let y = ClassId(u32::from((a * 7.0).sin() > (b * 5.0).cos()));
            t.learn_one(&x, Some(&Label::Class(y))).unwrap();
            assert!(t.node_count() <= 7);
        }
        assert_eq!(t.node_count(), 7);
        let before = t.state_checksum();
        t.learn_one(&Instance::from_numeric([("a", 0.5), ("b", 0.5)]), Some(&class(1)))
            .unwrap();
        assert_ne!(before, t.state_checksum(), "leaves keep learning after the budget");
    }

    #[test]
    fn fair_tree_with_neutral_fairness_matches_plain_tree() {
        let spec = SensitiveSpec::new("group", "dep", "fav", ClassId(1));
        let mut fair = HoeffdingTree::new(HoeffdingTreeConfig::fair(spec)).unwrap();
        let mut plain = HoeffdingTree::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..6000 {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let mut x = Instance::from_numeric([("a", a), ("b", b)]);
            // single group: fairness gain is identically zero
            x.insert("group", "fav");
            let y = Label::Class(ClassId(u32::from(a + 0.5 * b > 0.8)));
            fair.learn_one(&x, Some(&y)).unwrap();
            plain.learn_one(&x, Some(&y)).unwrap();
        }
        assert!(!plain.splits().is_empty());
        assert_eq!(fair.splits(), plain.splits());
    }

    #[test]
    fn fair_tree_never_splits_on_the_sensitive_feature() {
        let spec = SensitiveSpec::new("group", "dep", "fav", ClassId(1));
        let mut fair = HoeffdingTree::new(HoeffdingTreeConfig::fair(spec)).unwrap();
        let mut plain = HoeffdingTree::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..3000 {
            let fav = rng.random_bool(0.5);
            let mut x = Instance::from_numeric([("a", rng.random())]);
            x.insert("group", if fav { "fav" } else { "dep" });
            let y = Label::Class(ClassId(u32::from(fav)));
            fair.learn_one(&x, Some(&y)).unwrap();
            plain.learn_one(&x, Some(&y)).unwrap();
        }
        assert!(plain.splits().iter().any(|(f, _)| f == "group"));
        assert!(fair.splits().iter().all(|(f, _)| f != "group"));
    }

    proptest! {
        #[test]
        fn info_gain_is_permutation_invariant_and_bounded(
            cells in proptest::collection::vec(proptest::collection::vec(0u32..50, 3), 2..5),
        ) {
            let children: Vec<Vec<f64>> = cells.iter().map(|c| c.iter().map(|v| *v as f64).collect()).collect();
            let parent: Vec<f64> = (0..3).map(|i| children.iter().map(|c| c[i]).sum()).collect();
            let ig = compute_info_gain(&parent, &children).unwrap();
            let mut rev = children.clone();
            rev.reverse();
            let ig_rev = compute_info_gain(&parent, &rev).unwrap();
            prop_assert!((ig - ig_rev).abs() < 1e-12);
            prop_assert!(ig >= 0.0);
            prop_assert!(ig <= entropy(&parent) + 1e-12);
        }
    }
}
