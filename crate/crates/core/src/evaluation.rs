//! Prequential evaluation: each instance is predicted first and learned
//! second, so every prediction is out-of-sample.
//!
//! Metrics are computed from a [`ConfusionMatrix`] over all outcomes and a
//! [`RollingConfusion`] over the most recent ones. Time is measured only when
//! requested so that runs without timing are bit-for-bit reproducible.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fairness::{CumulativeFairnessTracker, SensitiveSpec};
use crate::stream::{ClassId, Estimator, LabeledInstance, Prediction};

/// Counts of `(truth, prediction)` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfusionMatrix {
    counts: BTreeMap<(ClassId, ClassId), u64>,
    total: u64,
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, truth: ClassId, predicted: ClassId) {
        *self.counts.entry((truth, predicted)).or_insert(0) += 1;
        self.total += 1;
    }

    /// Removes one previously added pair; no-op if absent.
    pub fn remove(&mut self, truth: ClassId, predicted: ClassId) {
        if let Some(c) = self.counts.get_mut(&(truth, predicted)) {
            *c -= 1;
            self.total -= 1;
            if *c == 0 {
                self.counts.remove(&(truth, predicted));
            }
        }
    }

    pub fn count(&self, truth: ClassId, predicted: ClassId) -> u64 {
        self.counts.get(&(truth, predicted)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn correct(&self) -> u64 {
        self.counts.iter().filter(|((t, p), _)| t == p).map(|(_, c)| c).sum()
    }

    /// Diagonal share; 0 on an empty matrix.
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.correct() as f64 / self.total as f64
    }

    /// Cohen's kappa; 0 on an empty matrix or when chance agreement is 1.
    pub fn cohen_kappa(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let mut rows: BTreeMap<ClassId, u64> = BTreeMap::new();
        let mut cols: BTreeMap<ClassId, u64> = BTreeMap::new();
        for (&(t, p), &c) in &self.counts {
            *rows.entry(t).or_insert(0) += c;
            *cols.entry(p).or_insert(0) += c;
        }
        let n = self.total as f64;
        let classes: BTreeSet<ClassId> = rows.keys().chain(cols.keys()).copied().collect();
        let p_e: f64 = classes
            .iter()
            .map(|c| {
                let r = rows.get(c).copied().unwrap_or(0) as f64;
                let k = cols.get(c).copied().unwrap_or(0) as f64;
                (r / n) * (k / n)
            })
            .sum();
        if p_e >= 1.0 {
            return 0.0;
        }
        (self.accuracy() - p_e) / (1.0 - p_e)
    }

    pub fn precision(&self, positive: ClassId) -> f64 {
        let tp = self.count(positive, positive);
        let predicted: u64 = self
            .counts
            .iter()
            .filter(|((_, p), _)| *p == positive)
            .map(|(_, c)| c)
            .sum();
        if predicted == 0 {
            0.0
        } else {
            tp as f64 / predicted as f64
        }
    }

    pub fn recall(&self, positive: ClassId) -> f64 {
        let tp = self.count(positive, positive);
        let actual: u64 = self
            .counts
            .iter()
            .filter(|((t, _), _)| *t == positive)
            .map(|(_, c)| c)
            .sum();
        if actual == 0 {
            0.0
        } else {
            tp as f64 / actual as f64
        }
    }

    /// Harmonic mean of precision and recall; 0 when either is undefined or both are 0.
    pub fn f1(&self, positive: ClassId) -> f64 {
        let p = self.precision(positive);
        let r = self.recall(positive);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Confusion matrix over the last `window` outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingConfusion {
    window: usize,
    buffer: VecDeque<(ClassId, ClassId)>,
    matrix: ConfusionMatrix,
}

impl RollingConfusion {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("rolling window must be at least 1".into()));
        }
        Ok(Self {
            window,
            buffer: VecDeque::with_capacity(window),
            matrix: ConfusionMatrix::new(),
        })
    }

    pub fn add(&mut self, truth: ClassId, predicted: ClassId) {
        if self.buffer.len() == self.window {
            if let Some((t, p)) = self.buffer.pop_front() {
                self.matrix.remove(t, p);
            }
        }
        self.buffer.push_back((truth, predicted));
        self.matrix.add(truth, predicted);
    }

    pub fn matrix(&self) -> &ConfusionMatrix {
        &self.matrix
    }

    pub fn accuracy(&self) -> f64 {
        self.matrix.accuracy()
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn memory_bytes(&self) -> usize {
        self.window * std::mem::size_of::<(ClassId, ClassId)>()
    }
}

/// Cumulative learn and predict time of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResourceTracker {
    enabled: bool,
    learn_ns: u64,
    predict_ns: u64,
}

impl ResourceTracker {
    /// With `enabled == false` all times stay 0.
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            ..Self::default()
        }
    }

    fn timed<T>(enabled: bool, acc: &mut u64, f: impl FnOnce() -> T) -> T {
        if !enabled {
            return f();
        }
        let start = Instant::now();
        let out = f();
        // at least 1 ns so that a timed run always reports progress
        *acc += (start.elapsed().as_nanos() as u64).max(1);
        out
    }

    pub fn time_learn<T>(&mut self, f: impl FnOnce() -> T) -> T {
        Self::timed(self.enabled, &mut self.learn_ns, f)
    }

    pub fn time_predict<T>(&mut self, f: impl FnOnce() -> T) -> T {
        Self::timed(self.enabled, &mut self.predict_ns, f)
    }

    pub fn learn_ns(&self) -> u64 {
        self.learn_ns
    }

    pub fn predict_ns(&self) -> u64 {
        self.predict_ns
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrequentialConfig {
    /// A record is emitted every `stride` steps.
    pub stride: u64,
    pub rolling_window: usize,
    /// Adds F1 of this class to the records.
    pub positive: Option<ClassId>,
    /// Adds cumulative statistical parity and equal opportunity to the records.
    pub sensitive: Option<SensitiveSpec>,
    pub timing: bool,
    /// Keeps every `(truth, prediction)` pair in the run result.
    pub keep_log: bool,
}

impl Default for PrequentialConfig {
    fn default() -> Self {
        Self {
            stride: 100,
            rolling_window: 500,
            positive: None,
            sensitive: None,
            timing: false,
            keep_log: false,
        }
    }
}

impl PrequentialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.rolling_window == 0 {
            return Err(Error::Config("rolling window must be at least 1".into()));
        }
        if let Some(s) = &self.sensitive {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRecord {
    pub step: u64,
    pub accuracy: f64,
    pub kappa: f64,
    pub rolling_accuracy: f64,
    pub f1: Option<f64>,
    pub statistical_parity: Option<f64>,
    pub equal_opportunity: Option<f64>,
    pub learn_time_ns: u64,
    pub predict_time_ns: u64,
    pub memory_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub steps: u64,
    pub accuracy: f64,
    pub kappa: f64,
    pub rolling_accuracy: f64,
    /// Mean of the rolling accuracy over all emitted records.
    pub mean_rolling_accuracy: f64,
    pub f1: Option<f64>,
    pub statistical_parity: Option<f64>,
    pub equal_opportunity: Option<f64>,
    pub learn_time_ns: u64,
    pub predict_time_ns: u64,
    pub memory_bytes: u64,
}

#[derive(Debug)]
pub struct PrequentialRun {
    pub records: Vec<EvalRecord>,
    pub summary: EvalSummary,
    pub matrix: ConfusionMatrix,
    /// `(truth, prediction)` per step when logging was requested.
    pub log: Vec<(ClassId, ClassId)>,
    /// Set when the stream or the model failed; records up to the failure are kept.
    pub error: Option<Error>,
}

fn predicted_class(p: Prediction) -> ClassId {
    match p {
        Prediction::ClassLabel(c) => c,
        Prediction::ClassDistribution(d) => d.argmax(),
        Prediction::Score(_) => ClassId::UNKNOWN,
    }
}

struct State {
    matrix: ConfusionMatrix,
    rolling: RollingConfusion,
    fairness: Option<CumulativeFairnessTracker>,
    resources: ResourceTracker,
    step: u64,
}

impl State {
    fn record(&self, cfg: &PrequentialConfig, model: &dyn Estimator) -> EvalRecord {
        EvalRecord {
            step: self.step,
            accuracy: self.matrix.accuracy(),
            kappa: self.matrix.cohen_kappa(),
            rolling_accuracy: self.rolling.accuracy(),
            f1: cfg.positive.map(|p| self.matrix.f1(p)),
            statistical_parity: self.fairness.as_ref().map(|t| t.statistical_parity()),
            equal_opportunity: self.fairness.as_ref().map(|t| t.equal_opportunity()),
            learn_time_ns: self.resources.learn_ns(),
            predict_time_ns: self.resources.predict_ns(),
            memory_bytes: model.memory_bytes() as u64,
        }
    }
}

/// Runs test-then-train over `stream`. A failing model or stream stops the
/// run; everything recorded before the failure is returned with the error.
pub fn prequential_run<I>(model: &mut dyn Estimator, stream: I, cfg: &PrequentialConfig) -> Result<PrequentialRun>
where
    I: IntoIterator<Item = Result<LabeledInstance>>,
{
    cfg.validate()?;
    let mut st = State {
        matrix: ConfusionMatrix::new(),
        rolling: RollingConfusion::new(cfg.rolling_window)?,
        fairness: cfg
            .sensitive
            .clone()
            .map(|s| CumulativeFairnessTracker::new(s, f64::INFINITY))
            .transpose()?,
        resources: ResourceTracker::new(cfg.timing),
        step: 0,
    };
    let mut records = Vec::new();
    let mut log = Vec::new();
    let mut error = None;

    for item in stream {
        let outcome = (|| -> Result<()> {
            let xi = item?;
            xi.validate()?;
            let truth =
                xi.y.class()
                    .ok_or_else(|| Error::Value("prequential evaluation needs class labels".into()))?;
            let prediction = st.resources.time_predict(|| model.predict_one(&xi.x))?;
            let predicted = predicted_class(prediction);
            st.matrix.add(truth, predicted);
            st.rolling.add(truth, predicted);
            if let Some(tracker) = st.fairness.as_mut() {
                if let Some(group) = tracker.spec().group_of(&xi.x) {
                    tracker.update_group(group, predicted, truth);
                }
            }
            if cfg.keep_log {
                log.push((truth, predicted));
            }
            st.resources.time_learn(|| model.learn_one(&xi.x, Some(&xi.y)))?;
            Ok(())
        })();
        if let Err(e) = outcome {
            error = Some(e);
            break;
        }
        st.step += 1;
        if st.step.is_multiple_of(cfg.stride) {
            records.push(st.record(cfg, model));
        }
    }

    let last = st.record(cfg, model);
    let mean_rolling_accuracy = if records.is_empty() {
        last.rolling_accuracy
    } else {
        records.iter().map(|r| r.rolling_accuracy).sum::<f64>() / records.len() as f64
    };
    let summary = EvalSummary {
        steps: st.step,
        accuracy: last.accuracy,
        kappa: last.kappa,
        rolling_accuracy: last.rolling_accuracy,
        mean_rolling_accuracy,
        f1: last.f1,
        statistical_parity: last.statistical_parity,
        equal_opportunity: last.equal_opportunity,
        learn_time_ns: last.learn_time_ns,
        predict_time_ns: last.predict_time_ns,
        memory_bytes: last.memory_bytes,
    };
    Ok(PrequentialRun {
        records,
        summary,
        matrix: st.matrix,
        log,
        error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{Capabilities, Instance, Label, MajorityClass, StateHasher};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn c(v: u32) -> ClassId {
        ClassId(v)
    }

    fn matrix(pairs: &[((u32, u32), u64)]) -> ConfusionMatrix {
        let mut m = ConfusionMatrix::new();
        for &((t, p), n) in pairs {
            for _ in 0..n {
                m.add(c(t), c(p));
            }
        }
        m
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(matrix(&[((0, 0), 3), ((1, 1), 2)]).accuracy(), 1.0);
        assert_eq!(matrix(&[((0, 1), 3), ((1, 0), 2)]).accuracy(), 0.0);
        assert_eq!(matrix(&[((0, 0), 3), ((0, 1), 1)]).accuracy(), 0.75);
        assert_eq!(ConfusionMatrix::new().accuracy(), 0.0);
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(matrix(&[((0, 0), 5), ((1, 1), 5)]).cohen_kappa(), 1.0);
        assert_eq!(
            matrix(&[((0, 0), 5), ((0, 1), 5), ((1, 0), 5), ((1, 1), 5)]).cohen_kappa(),
            0.0
        );
        // TP=40 FN=10 FP=20 TN=30: p_o = 0.7, p_e = 0.5*0.6 + 0.5*0.4 = 0.5
        let k = matrix(&[((1, 1), 40), ((1, 0), 10), ((0, 1), 20), ((0, 0), 30)]).cohen_kappa();
        assert!((k - 0.4).abs() < 1e-12);
        assert_eq!(matrix(&[((0, 0), 5)]).cohen_kappa(), 0.0);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(matrix(&[((1, 1), 1), ((0, 1), 1), ((1, 0), 1)]).f1(c(1)), 0.5);
        assert_eq!(matrix(&[((0, 1), 3), ((1, 0), 2)]).f1(c(1)), 0.0);
        assert_eq!(matrix(&[((0, 0), 30)]).f1(c(1)), 0.0);
        let f = matrix(&[((1, 1), 7), ((0, 1), 7), ((1, 0), 9)]).f1(c(1));
        assert!((f - 0.466_666_666_666_666_7).abs() < 1e-12);
        assert!((f - 0.4667).abs() < 5e-5);
    }

    #[test]
    fn rolling_accuracy() {
        let mut r = RollingConfusion::new(3).unwrap();
        r.add(c(1), c(1));
        assert_eq!(r.accuracy(), 1.0);
        r.add(c(1), c(0));
        assert_eq!(r.accuracy(), 0.5);
        r.add(c(0), c(0));
        assert!((r.accuracy() - 2.0 / 3.0).abs() < 1e-15);
        r.add(c(0), c(1));
        r.add(c(0), c(1));
        assert!((r.accuracy() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.len(), 3);
        assert!(RollingConfusion::new(0).is_err());
    }

    /// Predicts a fixed table of answers and never learns anything useful.
    struct Scripted {
        answers: Vec<ClassId>,
        learned: usize,
    }

    impl Estimator for Scripted {
        fn name(&self) -> &str {
            "Scripted"
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities::CLASSIFIER
        }
        fn learn_one(&mut self, _x: &Instance, _y: Option<&Label>) -> Result<()> {
            self.learned += 1;
            Ok(())
        }
        fn predict_one(&self, _x: &Instance) -> Result<Prediction> {
            Ok(Prediction::ClassLabel(self.answers[self.learned]))
        }
        fn state_checksum(&self) -> u64 {
            StateHasher::new().u64(self.learned as u64).finish()
        }
    }

    fn labeled(y: u32) -> Result<LabeledInstance> {
        Ok(LabeledInstance::new(
            Instance::from_numeric([("a", f64::from(y))]),
            Label::Class(c(y)),
        ))
    }

    #[test]
    fn oracle_stub_scores_one_at_every_stride() {
        let labels: Vec<u32> = (0..1000).map(|i| (i * 7 % 3) as u32).collect();
        let mut stub = Scripted {
            answers: labels.iter().map(|y| c(*y)).collect(),
            learned: 0,
        };
        let cfg = PrequentialConfig::default();
        let run = prequential_run(&mut stub, labels.iter().map(|y| labeled(*y)), &cfg).unwrap();
        assert_eq!(run.records.len(), 10);
        assert!(run.records.iter().all(|r| r.accuracy == 1.0));
        assert!(run.error.is_none());
    }

    #[test]
    fn first_prediction_is_cold() {
        let mut m = MajorityClass::new();
        let cfg = PrequentialConfig {
            keep_log: true,
            ..PrequentialConfig::default()
        };
        let run = prequential_run(&mut m, (0..5).map(|_| labeled(1)), &cfg).unwrap();
        assert_eq!(run.log[0], (c(1), ClassId::UNKNOWN));
        assert!(run.log[1..].iter().all(|(t, p)| t == p));
        assert_eq!(run.summary.accuracy, 0.8);
    }

    #[test]
    fn failures_keep_partial_records() {
        let mut m = MajorityClass::new();
        let stream = (0..250).map(|i| {
            if i == 230 {
                Err(Error::Parse {
                    row: 231,
                    message: "bad".into(),
                })
            } else {
                labeled(0)
            }
        });
        let run = prequential_run(&mut m, stream, &PrequentialConfig::default()).unwrap();
        assert_eq!(run.records.len(), 2);
        assert_eq!(run.summary.steps, 230);
        assert!(matches!(run.error, Some(Error::Parse { row: 231, .. })));
    }

    #[test]
    fn timing_is_off_by_default_and_monotone_when_on() {
        let mut m = MajorityClass::new();
        let run = prequential_run(&mut m, (0..300).map(|i| labeled(i % 2)), &PrequentialConfig::default()).unwrap();
        assert!(run
            .records
            .iter()
            .all(|r| r.learn_time_ns == 0 && r.predict_time_ns == 0));
        let cfg = PrequentialConfig {
            timing: true,
            ..PrequentialConfig::default()
        };
        let mut m = MajorityClass::new();
        let run = prequential_run(&mut m, (0..300).map(|i| labeled(i % 2)), &cfg).unwrap();
        assert!(run.records.windows(2).all(|w| w[0].learn_time_ns <= w[1].learn_time_ns));
        assert!(run.summary.learn_time_ns > 0 && run.summary.predict_time_ns > 0);
    }

    proptest! {
        #[test]
        fn incremental_metrics_match_recomputation(
            pairs in proptest::collection::vec((0u32..3, 0u32..3), 1..400),
        ) {
            let mut m = ConfusionMatrix::new();
            for (t, p) in &pairs {
                m.add(c(*t), c(*p));
            }
            let n = pairs.len() as f64;
            let correct = pairs.iter().filter(|(t, p)| t == p).count() as f64;
            prop_assert_eq!(m.accuracy(), correct / n);
            let tp = pairs.iter().filter(|(t, p)| *t == 1 && *p == 1).count() as f64;
            let fp = pairs.iter().filter(|(t, p)| *t != 1 && *p == 1).count() as f64;
            let fneg = pairs.iter().filter(|(t, p)| *t == 1 && *p != 1).count() as f64;
            let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fneg) };
            prop_assert!((m.f1(c(1)) - f1).abs() < 1e-12);
            let k = m.cohen_kappa();
            prop_assert!(k <= 1.0 + 1e-12);
            let perfect = pairs.iter().all(|(t, p)| t == p);
            let distinct = pairs.iter().map(|(t, _)| t).collect::<BTreeSet<_>>().len();
            if perfect && distinct > 1 {
                prop_assert!((k - 1.0).abs() < 1e-12);
            }
            if (k - 1.0).abs() < 1e-12 {
                prop_assert!(perfect);
            }
        }

        #[test]
        fn rolling_equals_suffix(
            pairs in proptest::collection::vec((0u32..2, 0u32..2), 1..200),
            w in 1usize..50,
        ) {
            let mut r = RollingConfusion::new(w).unwrap();
            for (t, p) in &pairs {
                r.add(c(*t), c(*p));
            }
            let tail = &pairs[pairs.len().saturating_sub(w)..];
            let correct = tail.iter().filter(|(t, p)| t == p).count() as f64;
            prop_assert_eq!(r.accuracy(), correct / tail.len() as f64);
        }
    }
}
