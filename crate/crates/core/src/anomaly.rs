//! Streaming anomaly detection.
//!
//! [`HalfSpaceTrees`] scores instances by the mass of the region they fall
//! into; [`QuantileFilter`] turns any score into a verdict by comparing it with
//! a running P² estimate of a high quantile of earlier scores.
//! [`run_anomaly_pipeline`] applies score, classify and learn in that order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::ConfusionMatrix;
use crate::stream::{Capabilities, ClassId, Estimator, Instance, Label, LabeledInstance, StateHasher};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HstConfig {
    pub n_trees: usize,
    pub height: usize,
    pub window_size: u32,
    /// Scoring stops at a node whose reference mass is below this share of the window.
    pub size_limit: f64,
    pub seed: u64,
}

impl Default for HstConfig {
    fn default() -> Self {
        Self {
            n_trees: 25,
            height: 15,
            window_size: 250,
            size_limit: 0.1,
            seed: 0,
        }
    }
}

impl HstConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.window_size == 0 {
            return Err(Error::Config("Half-Space Trees need trees and a window".into()));
        }
        if self.height == 0 || self.height > 24 {
            return Err(Error::Config(format!("tree height {} outside 1..=24", self.height)));
        }
        if !(0.0..=1.0).contains(&self.size_limit) {
            return Err(Error::Config("size limit must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Nodes of one complete tree.
    pub fn nodes_per_tree(&self) -> usize {
        (1usize << (self.height + 1)) - 1
    }
}

/// Ensemble of random half-space trees over `[0, 1]^d`, stored as complete
/// binary trees in flat arrays (children of node `i` at `2i+1`, `2i+2`).
#[derive(Debug, Clone)]
pub struct HalfSpaceTrees {
    cfg: HstConfig,
    features: Vec<String>,
    split_feature: Vec<u32>,
    split_value: Vec<f64>,
    reference: Vec<u32>,
    latest: Vec<u32>,
    in_window: u32,
    windows: u64,
}

impl HalfSpaceTrees {
    pub fn new(cfg: HstConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            features: Vec::new(),
            split_feature: Vec::new(),
            split_value: Vec::new(),
            reference: Vec::new(),
            latest: Vec::new(),
            in_window: 0,
            windows: 0,
        })
    }

    pub fn config(&self) -> &HstConfig {
        &self.cfg
    }

    pub fn is_built(&self) -> bool {
        !self.features.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.reference.len()
    }

    pub fn completed_windows(&self) -> u64 {
        self.windows
    }

    /// Builds every tree from the numeric feature names of `x`.
    fn build(&mut self, x: &Instance) {
        self.features = x.numeric_features().map(|(k, _)| k.to_string()).collect();
        if self.features.is_empty() {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let per_tree = self.cfg.nodes_per_tree();
        let total = per_tree * self.cfg.n_trees;
        self.split_feature = vec![0; total];
        self.split_value = vec![0.0; total];
        self.reference = vec![0; total];
        self.latest = vec![0; total];
        let d = self.features.len();
        let internal = (1usize << self.cfg.height) - 1;
        for t in 0..self.cfg.n_trees {
            let base = t * per_tree;
            // work range of each node, filled top-down
            let mut ranges: Vec<Vec<(f64, f64)>> = vec![Vec::new(); internal];
            ranges[0] = vec![(0.0, 1.0); d];
            for i in 0..internal {
                let q = rng.random_range(0..d);
                let (lo, hi) = ranges[i][q];
                let mid = (lo + hi) / 2.0;
                self.split_feature[base + i] = q as u32;
                self.split_value[base + i] = mid;
                for (child, bound) in [(2 * i + 1, (lo, mid)), (2 * i + 2, (mid, hi))] {
                    if child < internal {
                        let mut r = ranges[i].clone();
                        r[q] = bound;
                        ranges[child] = r;
                    }
                }
                ranges[i] = Vec::new();
            }
        }
    }

    fn values(&self, x: &Instance) -> Vec<f64> {
        self.features.iter().map(|f| x.numeric(f).unwrap_or(0.0)).collect()
    }

    fn child(&self, base: usize, node: usize, v: &[f64]) -> usize {
        let q = self.split_feature[base + node] as usize;
        if v[q] < self.split_value[base + node] {
            2 * node + 1
        } else {
            2 * node + 2
        }
    }

    /// Leaf index (within tree `t`) that `x` reaches at full depth.
    pub fn leaf_of(&self, tree: usize, x: &Instance) -> Option<usize> {
        if !self.is_built() {
            return None;
        }
        let v = self.values(x);
        let base = tree * self.cfg.nodes_per_tree();
        let mut node = 0;
        for _ in 0..self.cfg.height {
            node = self.child(base, node, &v);
        }
        Some(node)
    }

    pub fn reference_mass(&self, tree: usize, node: usize) -> u32 {
        self.reference
            .get(tree * self.cfg.nodes_per_tree() + node)
            .copied()
            .unwrap_or(0)
    }

    pub fn latest_mass(&self, tree: usize, node: usize) -> u32 {
        self.latest
            .get(tree * self.cfg.nodes_per_tree() + node)
            .copied()
            .unwrap_or(0)
    }

    /// Sum of latest masses over the leaves of one tree.
    pub fn latest_leaf_mass(&self, tree: usize) -> u64 {
        let per_tree = self.cfg.nodes_per_tree();
        let first_leaf = (1usize << self.cfg.height) - 1;
        (first_leaf..per_tree)
            .map(|n| u64::from(self.latest_mass(tree, n)))
            .sum()
    }

    /// Raw mass score `Σ r · 2^depth`; smaller means more anomalous.
    pub fn mass(&self, x: &Instance) -> f64 {
        if !self.is_built() {
            return 0.0;
        }
        let v = self.values(x);
        let per_tree = self.cfg.nodes_per_tree();
        let limit = self.cfg.size_limit * f64::from(self.cfg.window_size);
        let mut total = 0.0;
        for t in 0..self.cfg.n_trees {
            let base = t * per_tree;
            let mut node = 0;
            let mut depth = 0;
            while depth < self.cfg.height && f64::from(self.reference[base + node]) > limit {
                node = self.child(base, node, &v);
                depth += 1;
            }
            total += f64::from(self.reference[base + node]) * (1u64 << depth) as f64;
        }
        total
    }

    /// Largest possible raw mass.
    pub fn max_mass(&self) -> f64 {
        self.cfg.n_trees as f64 * f64::from(self.cfg.window_size) * (1u64 << self.cfg.height) as f64
    }
}

impl Estimator for HalfSpaceTrees {
    fn name(&self) -> &str {
        "HalfSpaceTrees"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ANOMALY_DETECTOR
    }

    fn learn_one(&mut self, x: &Instance, _y: Option<&Label>) -> Result<()> {
        x.validate()?;
        if !self.is_built() {
            self.build(x);
            if !self.is_built() {
                return Ok(());
            }
        }
        let v = self.values(x);
        let per_tree = self.cfg.nodes_per_tree();
        for t in 0..self.cfg.n_trees {
            let base = t * per_tree;
            let mut node = 0;
            self.latest[base] += 1;
            for _ in 0..self.cfg.height {
                node = self.child(base, node, &v);
                self.latest[base + node] += 1;
            }
        }
        self.in_window += 1;
        if self.in_window == self.cfg.window_size {
            std::mem::swap(&mut self.reference, &mut self.latest);
            self.latest.iter_mut().for_each(|m| *m = 0);
            self.in_window = 0;
            self.windows += 1;
        }
        Ok(())
    }

    /// `1 − mass / max_mass`, in `[0, 1]`; 1 before any window completed.
    fn score_one(&self, x: &Instance) -> Result<f64> {
        Ok((1.0 - self.mass(x) / self.max_mass()).clamp(0.0, 1.0))
    }

    fn memory_bytes(&self) -> usize {
        let per_tree = self.cfg.nodes_per_tree();
        let per_node = std::mem::size_of::<u32>() * 3 + std::mem::size_of::<f64>();
        self.cfg.n_trees * per_tree * per_node + self.features.iter().map(|f| f.len() + 24).sum::<usize>()
    }

    fn state_checksum(&self) -> u64 {
        let mut h = StateHasher::new();
        h.u64(u64::from(self.in_window)).u64(self.windows);
        for f in &self.features {
            h.str(f);
        }
        for (r, l) in self.reference.iter().zip(&self.latest) {
            h.u64(u64::from(*r)).u64(u64::from(*l));
        }
        h.finish()
    }
}

/// P² estimator of a single quantile: five markers, constant memory.
#[derive(Debug, Clone, PartialEq)]
pub struct P2Quantile {
    q: f64,
    count: u64,
    heights: [f64; 5],
    positions: [f64; 5],
    desired: [f64; 5],
    increments: [f64; 5],
}

impl P2Quantile {
    pub fn new(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Config(format!("quantile must lie in (0, 1), got {q}")));
        }
        Ok(Self {
            q,
            count: 0,
            heights: [0.0; 5],
            positions: [1.0, 2.0, 3.0, 4.0, 5.0],
            desired: [1.0, 1.0 + 2.0 * q, 1.0 + 4.0 * q, 3.0 + 2.0 * q, 5.0],
            increments: [0.0, q / 2.0, q, (1.0 + q) / 2.0, 1.0],
        })
    }

    pub fn quantile(&self) -> f64 {
        self.q
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn update(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::Value(format!("non-finite score {x}")));
        }
        if self.count < 5 {
            self.heights[self.count as usize] = x;
            self.count += 1;
            if self.count == 5 {
                self.heights.sort_by(f64::total_cmp);
            }
            return Ok(());
        }
        self.count += 1;
        let h = &mut self.heights;
        let k = if x < h[0] {
            h[0] = x;
            0
        } else if x >= h[4] {
            h[4] = x;
            3
        } else {
            (0..4).find(|&i| h[i] <= x && x < h[i + 1]).unwrap_or(3)
        };
        for p in &mut self.positions[k + 1..] {
            *p += 1.0;
        }
        for (d, inc) in self.desired.iter_mut().zip(&self.increments) {
            *d += inc;
        }
        for i in 1..4 {
            let n = self.positions;
            let diff = self.desired[i] - n[i];
            if (diff >= 1.0 && n[i + 1] - n[i] > 1.0) || (diff <= -1.0 && n[i - 1] - n[i] < -1.0) {
                let d = diff.signum();
                let q = self.heights;
                let parabolic = q[i]
                    + d / (n[i + 1] - n[i - 1])
                        * ((n[i] - n[i - 1] + d) * (q[i + 1] - q[i]) / (n[i + 1] - n[i])
                            + (n[i + 1] - n[i] - d) * (q[i] - q[i - 1]) / (n[i] - n[i - 1]));
                self.heights[i] = if q[i - 1] < parabolic && parabolic < q[i + 1] {
                    parabolic
                } else {
                    let j = if d > 0.0 { i + 1 } else { i - 1 };
                    q[i] + d * (q[j] - q[i]) / (n[j] - n[i])
                };
                self.positions[i] += d;
            }
        }
        Ok(())
    }

    /// Current estimate; `None` before five observations.
    pub fn estimate(&self) -> Option<f64> {
        (self.count >= 5).then_some(self.heights[2])
    }

    /// Marker positions; strictly increasing once initialised.
    pub fn positions(&self) -> [f64; 5] {
        self.positions
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnomalyVerdict {
    pub score: f64,
    pub is_anomaly: bool,
    /// Estimate used for the decision; infinite while undefined.
    pub threshold: f64,
}

/// Flags scores above a running quantile of earlier scores.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFilter {
    estimator: P2Quantile,
    warmup: u64,
}

impl QuantileFilter {
    pub fn new(q: f64, warmup: u64) -> Result<Self> {
        Ok(Self {
            estimator: P2Quantile::new(q)?,
            warmup,
        })
    }

    pub fn observed(&self) -> u64 {
        self.estimator.count()
    }

    pub fn estimate(&self) -> Option<f64> {
        self.estimator.estimate()
    }

    pub fn classify(&self, score: f64) -> AnomalyVerdict {
        let threshold = self.estimate().unwrap_or(f64::INFINITY);
        AnomalyVerdict {
            score,
            is_anomaly: self.observed() > self.warmup && score > threshold,
            threshold,
        }
    }

    pub fn update(&mut self, score: f64) -> Result<()> {
        self.estimator.update(score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnomalyRecord {
    pub step: u64,
    pub score: f64,
    pub threshold: f64,
    pub verdict: bool,
    pub truth: bool,
}

#[derive(Debug)]
pub struct AnomalyRun {
    pub records: Vec<AnomalyRecord>,
    pub matrix: ConfusionMatrix,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Set when a stage failed; records up to the failure are kept.
    pub error: Option<Error>,
}

/// Per instance: score, classify, update the filter, then learn. `detector`
/// is typically a [`crate::Pipeline`] of a scaler and a detector.
pub fn run_anomaly_pipeline<I>(detector: &mut dyn Estimator, filter: &mut QuantileFilter, stream: I) -> AnomalyRun
where
    I: IntoIterator<Item = Result<LabeledInstance>>,
{
    let mut records = Vec::new();
    let mut matrix = ConfusionMatrix::new();
    let mut error = None;
    for (i, item) in stream.into_iter().enumerate() {
        let step = (|| -> Result<AnomalyRecord> {
            let xi = item?;
            let truth =
                xi.y.is_anomaly()
                    .ok_or_else(|| Error::Value("anomaly stream needs anomaly labels".into()))?;
            let score = detector.score_one(&xi.x)?;
            if !score.is_finite() {
                return Err(Error::Domain(format!("detector produced score {score}")));
            }
            let verdict = filter.classify(score);
            filter.update(score)?;
            detector.learn_one(&xi.x, None)?;
            Ok(AnomalyRecord {
                step: i as u64 + 1,
                score,
                threshold: verdict.threshold,
                verdict: verdict.is_anomaly,
                truth,
            })
        })();
        match step {
            Ok(r) => {
                matrix.add(ClassId(u32::from(r.truth)), ClassId(u32::from(r.verdict)));
                records.push(r);
            }
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    let pos = ClassId(1);
    AnomalyRun {
        f1: matrix.f1(pos),
        precision: matrix.precision(pos),
        recall: matrix.recall(pos),
        records,
        matrix,
        error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    fn small() -> HstConfig {
        HstConfig {
            n_trees: 5,
            height: 6,
            window_size: 250,
            size_limit: 0.1,
            seed: 3,
        }
    }

    fn point(a: f64, b: f64) -> Instance {
        Instance::from_numeric([("a", a), ("b", b)])
    }

    #[test]
    fn fresh_trees_score_one() {
        let h = HalfSpaceTrees::new(small()).unwrap();
        assert_eq!(h.score_one(&point(0.3, 0.3)).unwrap(), 1.0);
    }

    #[test]
    fn familiar_point_scores_lower_than_far_point() {
        let mut h = HalfSpaceTrees::new(HstConfig::default()).unwrap();
        let x = point(0.2, 0.2);
        for _ in 0..1000 {
            h.learn_one(&x, None).unwrap();
        }
        assert!(h.score_one(&x).unwrap() < h.score_one(&point(0.9, 0.95)).unwrap());
    }

    #[test]
    fn single_learn_fills_one_leaf_per_tree() {
        let mut h = HalfSpaceTrees::new(small()).unwrap();
        h.learn_one(&point(0.4, 0.7), None).unwrap();
        let first_leaf = (1 << 6) - 1;
        for t in 0..5 {
            let leaves: Vec<u32> = (first_leaf..h.cfg.nodes_per_tree())
                .map(|n| h.latest_mass(t, n))
                .collect();
            assert_eq!(leaves.iter().filter(|m| **m == 1).count(), 1);
            assert_eq!(leaves.iter().sum::<u32>(), 1);
        }
    }

    #[test]
    fn reference_masses_equal_first_window_counts() {
        let mut h = HalfSpaceTrees::new(small()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<Instance> = (0..250).map(|_| point(rng.random(), rng.random())).collect();
        for x in &xs {
            h.learn_one(x, None).unwrap();
        }
        assert_eq!(h.completed_windows(), 1);
        for t in 0..5 {
            let mut counts = std::collections::HashMap::new();
            for x in &xs {
                *counts.entry(h.leaf_of(t, x).unwrap()).or_insert(0u32) += 1;
            }
            let first_leaf = (1 << 6) - 1;
            for n in first_leaf..h.cfg.nodes_per_tree() {
                assert_eq!(h.reference_mass(t, n), counts.get(&n).copied().unwrap_or(0));
                assert_eq!(h.latest_mass(t, n), 0);
            }
            assert_eq!(h.reference_mass(t, 0), 250);
        }
    }

    #[test]
    fn node_count_is_fixed() {
        let mut h = HalfSpaceTrees::new(small()).unwrap();
        h.learn_one(&point(0.1, 0.1), None).unwrap();
        let (n, mem) = (h.node_count(), h.memory_bytes());
        assert_eq!(n, 5 * ((1 << 7) - 1));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..3000 {
            h.learn_one(&point(rng.random(), rng.random()), None).unwrap();
        }
        assert_eq!((h.node_count(), h.memory_bytes()), (n, mem));
    }

    proptest! {
        #[test]
        fn hst_scores_in_unit_interval(
            train in proptest::collection::vec((0f64..1.0, 0f64..1.0), 0..600),
            probe in (-0.5f64..1.5, -0.5f64..1.5),
        ) {
            let mut h = HalfSpaceTrees::new(HstConfig { window_size: 100, ..small() }).unwrap();
            for (a, b) in &train {
                h.learn_one(&point(*a, *b), None).unwrap();
            }
            let s = h.score_one(&point(probe.0, probe.1)).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            for t in 0..5 {
                prop_assert!(h.latest_leaf_mass(t) == u64::from(h.in_window));
            }
        }

        #[test]
        fn p2_markers_stay_ordered(xs in proptest::collection::vec(-100f64..100.0, 5..300)) {
            let mut p = P2Quantile::new(0.9).unwrap();
            for x in &xs {
                p.update(*x).unwrap();
            }
            let n = p.positions();
            prop_assert!(n.windows(2).all(|w| w[0] < w[1]));
            let h = p.heights;
            prop_assert!(h.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn p2_small_and_constant_inputs() {
        let mut p = P2Quantile::new(0.5).unwrap();
        for x in [4.0, 1.0, 3.0, 5.0] {
            p.update(x).unwrap();
        }
        assert_eq!(p.estimate(), None);
        p.update(2.0).unwrap();
        assert_eq!(p.estimate(), Some(3.0));
        let mut c = P2Quantile::new(0.99).unwrap();
        for _ in 0..1000 {
            c.update(0.7).unwrap();
        }
        assert_eq!(c.estimate(), Some(0.7));
        assert!(c.update(f64::NAN).is_err());
    }

    #[test]
    fn p2_tracks_uniform_quantiles() {
        for seed in 0..5 {
            for q in [0.5, 0.9, 0.99] {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut p = P2Quantile::new(q).unwrap();
                let mut xs: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
                for x in &xs {
                    p.update(*x).unwrap();
                }
                xs.sort_by(f64::total_cmp);
                let exact = xs[((q * xs.len() as f64).ceil() as usize - 1).min(xs.len() - 1)];
                assert!((p.estimate().unwrap() - exact).abs() < 0.02, "q={q} seed={seed}");
            }
        }
    }

    #[test]
    fn filter_warmup_and_threshold() {
        let mut f = QuantileFilter::new(0.99, 100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let v = f.classify(rng.random::<f64>() * 10.0);
            assert!(!v.is_anomaly);
            f.update(v.score).unwrap();
        }
        for _ in 0..2000 {
            f.update(rng.random()).unwrap();
        }
        let t = f.estimate().unwrap();
        assert!(!f.classify(t - 0.01).is_anomaly);
        let v = f.classify(t + 0.01);
        assert!(v.is_anomaly && v.threshold == t);
    }

    /// Records the checksum it had when scoring and refuses to learn twice in a row.
    struct Probe {
        inner: HalfSpaceTrees,
        scored_at: std::sync::Mutex<Vec<u64>>,
        learned_at: Vec<u64>,
    }

    impl Estimator for Probe {
        fn name(&self) -> &str {
            "Probe"
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities::ANOMALY_DETECTOR
        }
        fn learn_one(&mut self, x: &Instance, y: Option<&Label>) -> Result<()> {
            self.learned_at.push(self.inner.state_checksum());
            self.inner.learn_one(x, y)
        }
        fn score_one(&self, x: &Instance) -> Result<f64> {
            self.scored_at.lock().unwrap().push(self.inner.state_checksum());
            self.inner.score_one(x)
        }
        fn state_checksum(&self) -> u64 {
            self.inner.state_checksum()
        }
    }

    fn labeled(a: f64, b: f64, anomalous: bool) -> Result<LabeledInstance> {
        Ok(LabeledInstance::new(point(a, b), Label::Anomaly(anomalous)))
    }

    #[test]
    fn pipeline_scores_before_learning() {
        let mut probe = Probe {
            inner: HalfSpaceTrees::new(HstConfig {
                window_size: 20,
                ..small()
            })
            .unwrap(),
            scored_at: Default::default(),
            learned_at: Vec::new(),
        };
        let mut f = QuantileFilter::new(0.9, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let stream: Vec<_> = (0..300).map(|_| labeled(rng.random(), rng.random(), false)).collect();
        let run = run_anomaly_pipeline(&mut probe, &mut f, stream);
        assert_eq!(run.records.len(), 300);
        assert_eq!(*probe.scored_at.lock().unwrap(), probe.learned_at);
        assert_eq!(run.f1, 0.0);
        assert_eq!(run.precision, 0.0);
    }

    #[test]
    fn pipeline_stops_on_bad_labels() {
        let mut h = HalfSpaceTrees::new(small()).unwrap();
        let mut f = QuantileFilter::new(0.9, 10).unwrap();
        let stream = vec![
            labeled(0.1, 0.1, false),
            Ok(LabeledInstance::new(point(0.2, 0.2), Label::Real(1.0))),
            labeled(0.3, 0.3, true),
        ];
        let run = run_anomaly_pipeline(&mut h, &mut f, stream);
        assert_eq!(run.records.len(), 1);
        assert!(matches!(run.error, Some(Error::Value(_))));
    }
}
