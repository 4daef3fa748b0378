//! Concept-drift detectors.
//!
//! [`Adwin`] keeps an exponential histogram of the recent stream and tests
//! every bucket boundary for a significant difference of sub-window means,
//! once at the warning confidence and once at the change confidence. [`Eddm`]
//! watches the distance between consecutive classification errors.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DriftState {
    Stable,
    Warning,
    Change,
}

/// Common interface of the detectors. EDDM interprets any non-zero value as an error.
pub trait DriftDetector: Send {
    fn update(&mut self, value: f64) -> Result<DriftState>;
    fn memory_bytes(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdwinConfig {
    pub delta_change: f64,
    pub delta_warning: f64,
    /// Buckets per histogram row before the two oldest are merged.
    pub max_buckets: usize,
}

impl Default for AdwinConfig {
    fn default() -> Self {
        Self {
            delta_change: 0.002,
            delta_warning: 0.01,
            max_buckets: 5,
        }
    }
}

impl AdwinConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |d: f64| d > 0.0 && d < 1.0;
        if !open(self.delta_change) || !open(self.delta_warning) {
            return Err(Error::Config("ADWIN deltas must lie in (0, 1)".into()));
        }
        if self.delta_change > self.delta_warning {
            return Err(Error::Config("ADWIN delta_change must not exceed delta_warning".into()));
        }
        if self.max_buckets < 2 {
            return Err(Error::Config("ADWIN needs at least 2 buckets per row".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Bucket {
    sum: f64,
    count: u64,
}

/// Cut threshold for sub-windows of sizes `n0` and `n1` in a window of `n`.
pub fn adwin_cut_threshold(n0: f64, n1: f64, n: f64, delta: f64) -> f64 {
    let m = 1.0 / (1.0 / n0 + 1.0 / n1);
    ((1.0 / (2.0 * m)) * (4.0 * n / delta).ln()).sqrt()
}

/// ADWIN with separate warning and change confidences.
#[derive(Debug, Clone)]
pub struct Adwin {
    cfg: AdwinConfig,
    /// Row `i` holds buckets that summarise `2^i` values; front is newest.
    rows: Vec<VecDeque<Bucket>>,
    total_count: u64,
    total_sum: f64,
    changes: u64,
}

impl Default for Adwin {
    fn default() -> Self {
        Self::new(AdwinConfig::default()).expect("default config is valid")
    }
}

impl Adwin {
    pub fn new(cfg: AdwinConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            rows: Vec::new(),
            total_count: 0,
            total_sum: 0.0,
            changes: 0,
        })
    }

    pub fn config(&self) -> &AdwinConfig {
        &self.cfg
    }

    /// Retained window length and mean (0 when empty).
    pub fn window_stats(&self) -> (u64, f64) {
        if self.total_count == 0 {
            (0, 0.0)
        } else {
            (self.total_count, self.total_sum / self.total_count as f64)
        }
    }

    pub fn width(&self) -> u64 {
        self.total_count
    }

    pub fn bucket_count(&self) -> usize {
        self.rows.iter().map(VecDeque::len).sum()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Number of Change signals emitted so far.
    pub fn change_count(&self) -> u64 {
        self.changes
    }

    pub fn update(&mut self, value: f64) -> Result<DriftState> {
        if !value.is_finite() {
            return Err(Error::Value(format!("ADWIN input is not finite: {value}")));
        }
        self.insert(value);
        let warning = self.has_cut(self.cfg.delta_warning);
        let mut changed = false;
        while self.has_cut(self.cfg.delta_change) {
            self.drop_oldest();
            changed = true;
        }
        Ok(if changed {
            self.changes += 1;
            DriftState::Change
        } else if warning {
            DriftState::Warning
        } else {
            DriftState::Stable
        })
    }

    fn insert(&mut self, value: f64) {
        if self.rows.is_empty() {
            self.rows.push(VecDeque::new());
        }
        self.rows[0].push_front(Bucket { sum: value, count: 1 });
        self.total_count += 1;
        self.total_sum += value;
        let mut row = 0;
        while row < self.rows.len() && self.rows[row].len() > self.cfg.max_buckets {
            let older = self.rows[row].pop_back().expect("row over capacity");
            let old = self.rows[row].pop_back().expect("row over capacity");
            if row + 1 == self.rows.len() {
                self.rows.push(VecDeque::new());
            }
            self.rows[row + 1].push_front(Bucket {
                sum: older.sum + old.sum,
                count: older.count + old.count,
            });
            row += 1;
        }
    }

    fn drop_oldest(&mut self) {
        while let Some(last) = self.rows.last_mut() {
            if let Some(b) = last.pop_back() {
                self.total_count -= b.count;
                self.total_sum -= b.sum;
                if last.is_empty() {
                    self.rows.pop();
                }
                break;
            }
            self.rows.pop();
        }
        if self.total_count == 0 {
            self.total_sum = 0.0;
        }
    }

    /// Tests every bucket boundary, oldest first.
    fn has_cut(&self, delta: f64) -> bool {
        if self.total_count < 2 {
            return false;
        }
        let n = self.total_count as f64;
        let mut n0 = 0u64;
        let mut s0 = 0.0;
        for row in self.rows.iter().rev() {
            for b in row.iter().rev() {
                n0 += b.count;
                s0 += b.sum;
                let n1 = self.total_count - n0;
                if n1 == 0 {
                    return false;
                }
                let (f0, f1) = (n0 as f64, n1 as f64);
                let diff = (s0 / f0 - (self.total_sum - s0) / f1).abs();
                if diff >= adwin_cut_threshold(f0, f1, n, delta) {
                    return true;
                }
            }
        }
        false
    }
}

impl DriftDetector for Adwin {
    fn update(&mut self, value: f64) -> Result<DriftState> {
        Adwin::update(self, value)
    }

    fn memory_bytes(&self) -> usize {
        self.bucket_count() * std::mem::size_of::<Bucket>() + self.rows.len() * std::mem::size_of::<VecDeque<Bucket>>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EddmConfig {
    /// Warning ratio.
    pub alpha: f64,
    /// Change ratio.
    pub beta: f64,
    pub min_errors: u64,
}

impl Default for EddmConfig {
    fn default() -> Self {
        Self {
            alpha: 0.95,
            beta: 0.9,
            min_errors: 30,
        }
    }
}

/// Early drift detection from the spacing of classification errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Eddm {
    cfg: EddmConfig,
    step: u64,
    last_error_step: u64,
    errors: u64,
    mean: f64,
    m2: f64,
    max_level: f64,
}

impl Default for Eddm {
    fn default() -> Self {
        Self::new(EddmConfig::default()).expect("default config is valid")
    }
}

impl Eddm {
    pub fn new(cfg: EddmConfig) -> Result<Self> {
        if !(0.0 < cfg.beta && cfg.beta < cfg.alpha && cfg.alpha < 1.0) {
            return Err(Error::Config("EDDM requires 0 < beta < alpha < 1".into()));
        }
        Ok(Self {
            cfg,
            step: 0,
            last_error_step: 0,
            errors: 0,
            mean: 0.0,
            m2: 0.0,
            max_level: 0.0,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn errors(&self) -> u64 {
        self.errors
    }

    /// Mean and standard deviation of the distances between errors.
    pub fn distance_stats(&self) -> (f64, f64) {
        let std = if self.errors == 0 {
            0.0
        } else {
            (self.m2 / self.errors as f64).sqrt()
        };
        (self.mean, std)
    }

    /// Ratio of the current `mean + 2 std` to its maximum.
    pub fn ratio(&self) -> f64 {
        let (m, s) = self.distance_stats();
        if self.max_level > 0.0 {
            (m + 2.0 * s) / self.max_level
        } else {
            1.0
        }
    }

    pub fn update(&mut self, error_occurred: bool) -> DriftState {
        self.step += 1;
        if !error_occurred {
            return DriftState::Stable;
        }
        self.errors += 1;
        let distance = (self.step - self.last_error_step) as f64;
        self.last_error_step = self.step;
        let delta = distance - self.mean;
        self.mean += delta / self.errors as f64;
        self.m2 += delta * (distance - self.mean);

        let (m, s) = self.distance_stats();
        let level = m + 2.0 * s;
        if level > self.max_level {
            self.max_level = level;
            return DriftState::Stable;
        }
        if self.errors < self.cfg.min_errors {
            return DriftState::Stable;
        }
        let ratio = level / self.max_level;
        if ratio < self.cfg.beta {
            self.reset_statistics();
            DriftState::Change
        } else if ratio < self.cfg.alpha {
            DriftState::Warning
        } else {
            DriftState::Stable
        }
    }

    fn reset_statistics(&mut self) {
        self.errors = 0;
        self.mean = 0.0;
        self.m2 = 0.0;
        self.max_level = 0.0;
        self.last_error_step = self.step;
    }
}

impl DriftDetector for Eddm {
    fn update(&mut self, value: f64) -> Result<DriftState> {
        if !value.is_finite() {
            return Err(Error::Value(format!("EDDM input is not finite: {value}")));
        }
        Ok(Eddm::update(self, value != 0.0))
    }

    fn memory_bytes(&self) -> usize {
        std::mem::size_of::<Self>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exact-window reference: stores every value and checks every cut.
    pub(crate) struct BruteAdwin {
        window: Vec<f64>,
        delta_change: f64,
        delta_warning: f64,
    }

    impl BruteAdwin {
        fn new(delta_change: f64, delta_warning: f64) -> Self {
            Self {
                window: Vec::new(),
                delta_change,
                delta_warning,
            }
        }

        fn has_cut(&self, delta: f64) -> bool {
            let n = self.window.len();
            let total: f64 = self.window.iter().sum();
            for k in 1..n {
                let s0: f64 = self.window[..k].iter().sum();
                let (f0, f1) = (k as f64, (n - k) as f64);
                let diff = (s0 / f0 - (total - s0) / f1).abs();
                let m = 1.0 / (1.0 / f0 + 1.0 / f1);
                let eps = ((1.0 / (2.0 * m)) * (4.0 * n as f64 / delta).ln()).sqrt();
                if diff >= eps {
                    return true;
                }
            }
            false
        }

        fn update(&mut self, v: f64) -> DriftState {
            self.window.push(v);
            let warn = self.has_cut(self.delta_warning);
            let mut changed = false;
            while self.has_cut(self.delta_change) {
                self.window.remove(0);
                changed = true;
            }
            if changed {
                DriftState::Change
            } else if warn {
                DriftState::Warning
            } else {
                DriftState::Stable
            }
        }
    }

    fn exact_adwin() -> Adwin {
        Adwin::new(AdwinConfig {
            max_buckets: 1024,
            ..AdwinConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn single_value_is_stable() {
        let mut a = Adwin::default();
        assert_eq!(a.update(0.3).unwrap(), DriftState::Stable);
        assert_eq!(a.window_stats(), (1, 0.3));
    }

    #[test]
    fn empty_window_stats() {
        assert_eq!(Adwin::default().window_stats(), (0, 0.0));
    }

    #[test]
    fn ten_ones() {
        let mut a = Adwin::default();
        for _ in 0..10 {
            a.update(1.0).unwrap();
        }
        assert_eq!(a.window_stats(), (10, 1.0));
    }

    #[test]
    fn constant_stream_never_changes() {
        let mut a = Adwin::default();
        for _ in 0..10_000 {
            assert_ne!(a.update(0.5).unwrap(), DriftState::Change);
        }
        assert_eq!(a.width(), 10_000);
    }

    #[test]
    fn detects_mean_shift_and_keeps_the_new_concept() {
        let mut a = Adwin::default();
        for _ in 0..1000 {
            assert_eq!(a.update(0.0).unwrap(), DriftState::Stable);
        }
        let mut detected = None;
        for i in 0..1000 {
            if a.update(1.0).unwrap() == DriftState::Change && detected.is_none() {
                detected = Some(i);
            }
        }
        let at = detected.expect("shift must be detected");
        assert!(at < 300, "detected after {at} steps");
        let (_, mean) = a.window_stats();
        assert!((mean - 1.0).abs() < 0.05, "post-change mean {mean}");
    }

    #[test]
    fn rejects_non_finite_and_bad_config() {
        assert!(Adwin::default().update(f64::NAN).is_err());
        assert!(Adwin::new(AdwinConfig {
            delta_change: 0.1,
            delta_warning: 0.01,
            max_buckets: 5
        })
        .is_err());
    }

    #[test]
    fn matches_brute_force_on_exact_storage() {
        for seed in 0..8u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut fast = exact_adwin();
            let mut slow = BruteAdwin::new(0.002, 0.01);
            let shift = rng.random_range(100..400);
            for i in 0..512 {
                let p = if i < shift { 0.2 } else { 0.8 };
                let v = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
                assert_eq!(fast.update(v).unwrap(), slow.update(v), "seed {seed} step {i}");
                assert_eq!(fast.width() as usize, slow.window.len());
            }
        }
    }

    #[test]
    fn warning_precedes_or_coincides_with_change() {
        let mut a = Adwin::default();
        for _ in 0..1000 {
            a.update(0.0).unwrap();
        }
        let mut first_warning = None;
        let mut first_change = None;
        for i in 0..1000 {
            match a.update(0.6).unwrap() {
                DriftState::Warning if first_warning.is_none() => first_warning = Some(i),
                DriftState::Change if first_change.is_none() => {
                    first_change = Some(i);
                    first_warning.get_or_insert(i);
                }
                _ => {}
            }
        }
        assert!(first_warning.unwrap() <= first_change.unwrap());
    }

    proptest! {
        #[test]
        fn bucket_memory_is_logarithmic(values in proptest::collection::vec(0.0f64..1.0, 1..3000)) {
            let mut a = Adwin::default();
            for v in values {
                a.update(v).unwrap();
                let n = a.width() as f64;
                let m = 5.0;
                let bound = (m + 1.0) * ((n / m).log2() + 1.0).max(1.0).ceil();
                prop_assert!(a.bucket_count() as f64 <= bound);
                let counted: u64 = a.rows.iter().flatten().map(|b| b.count).sum();
                prop_assert_eq!(counted, a.width());
            }
        }
    }

    #[test]
    fn eddm_no_errors_is_stable() {
        let mut d = Eddm::default();
        for _ in 0..1000 {
            assert_eq!(d.update(false), DriftState::Stable);
        }
    }

    #[test]
    fn eddm_growing_distances_stay_stable() {
        let mut d = Eddm::default();
        for gap in 1..200u64 {
            for _ in 1..gap {
                d.update(false);
            }
            assert_eq!(d.update(true), DriftState::Stable);
        }
    }

    #[test]
    fn eddm_flags_shrinking_distances() {
        let mut d = Eddm::default();
        for _ in 0..30 {
            for _ in 0..99 {
                d.update(false);
            }
            d.update(true);
        }
        let mut change_after = None;
        for k in 1..=40 {
            d.update(false);
            if d.update(true) == DriftState::Change {
                change_after = Some(k);
                break;
            }
        }
        assert!(change_after.is_some());
    }

    #[test]
    fn eddm_correct_steps_only_advance_the_clock() {
        let mut d = Eddm::default();
        for i in 0..50 {
            d.update(i % 7 == 0);
        }
        let before = d.clone();
        d.update(false);
        assert_eq!(d.step(), before.step() + 1);
        let mut rewound = d.clone();
        rewound.step = before.step;
        assert_eq!(rewound, before);
    }

    #[test]
    fn eddm_rejects_bad_ratios() {
        assert!(Eddm::new(EddmConfig {
            alpha: 0.8,
            beta: 0.9,
            min_errors: 30
        })
        .is_err());
    }
}
