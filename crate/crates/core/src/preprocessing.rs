//! Running feature scalers.
//!
//! Both scalers learn only through `learn_one`; `transform_one` reads the
//! state without touching it. Categorical features pass through unchanged and
//! numeric features the scaler has never seen map to 0.

use indexmap::IndexMap;

use crate::error::Result;
use crate::stream::{Capabilities, Estimator, FeatureValue, Instance, Label, StateHasher};

/// Min-max scaler mapping each numeric feature into `[0, 1]` with the running
/// extremes. Values outside the learned range are clamped.
#[derive(Debug, Clone, Default)]
pub struct MinMaxScaler {
    ranges: IndexMap<String, (f64, f64)>,
}

impl MinMaxScaler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Learned `(min, max)` of a feature.
    pub fn range(&self, feature: &str) -> Option<(f64, f64)> {
        self.ranges.get(feature).copied()
    }

    pub fn tracked_features(&self) -> usize {
        self.ranges.len()
    }

    pub fn scale(&self, feature: &str, v: f64) -> f64 {
        match self.ranges.get(feature) {
            Some(&(lo, hi)) if hi > lo => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
            _ => 0.0,
        }
    }
}

impl Estimator for MinMaxScaler {
    fn name(&self) -> &str {
        "MinMaxScaler"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::TRANSFORMER
    }

    fn learn_one(&mut self, x: &Instance, _y: Option<&Label>) -> Result<()> {
        x.validate()?;
        for (name, v) in x.numeric_features() {
            match self.ranges.get_mut(name) {
                Some((lo, hi)) => {
                    *lo = lo.min(v);
                    *hi = hi.max(v);
                }
                None => {
                    self.ranges.insert(name.to_string(), (v, v));
                }
            }
        }
        Ok(())
    }

    fn transform_one(&self, x: &Instance) -> Result<Instance> {
        let mut out = Instance::with_capacity(x.len());
        for (name, value) in x.iter() {
            match value {
                FeatureValue::Numeric(v) => out.insert(name, self.scale(name, *v)),
                FeatureValue::Categorical(_) => out.insert(name, value.clone()),
            }
        }
        Ok(out)
    }

    fn memory_bytes(&self) -> usize {
        self.ranges
            .keys()
            .map(|k| k.len() + 2 * std::mem::size_of::<f64>())
            .sum()
    }

    fn state_checksum(&self) -> u64 {
        let mut h = StateHasher::new();
        for (k, (lo, hi)) in &self.ranges {
            h.str(k).f64(*lo).f64(*hi);
        }
        h.finish()
    }
}

/// Welford accumulator of one feature.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    pub count: u64,
    pub mean: f64,
    /// Sum of squared deviations from the mean.
    pub m2: f64,
}

impl RunningMoments {
    pub fn update(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }
}

/// Standard scaler: `(v - mean) / stddev` with running population moments.
#[derive(Debug, Clone, Default)]
pub struct StandardScaler {
    moments: IndexMap<String, RunningMoments>,
}

const STD_FLOOR: f64 = 1e-12;

impl StandardScaler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn moments(&self, feature: &str) -> Option<RunningMoments> {
        self.moments.get(feature).copied()
    }
}

impl Estimator for StandardScaler {
    fn name(&self) -> &str {
        "StandardScaler"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::TRANSFORMER
    }

    fn learn_one(&mut self, x: &Instance, _y: Option<&Label>) -> Result<()> {
        x.validate()?;
        for (name, v) in x.numeric_features() {
            if let Some(m) = self.moments.get_mut(name) {
                m.update(v);
            } else {
                let mut m = RunningMoments::default();
                m.update(v);
                self.moments.insert(name.to_string(), m);
            }
        }
        Ok(())
    }

    fn transform_one(&self, x: &Instance) -> Result<Instance> {
        let mut out = Instance::with_capacity(x.len());
        for (name, value) in x.iter() {
            match value {
                FeatureValue::Numeric(v) => {
                    let scaled = match self.moments.get(name) {
                        Some(m) => (v - m.mean) / m.variance().sqrt().max(STD_FLOOR),
                        None => 0.0,
                    };
                    out.insert(name, scaled);
                }
                FeatureValue::Categorical(_) => out.insert(name, value.clone()),
            }
        }
        Ok(out)
    }

    fn memory_bytes(&self) -> usize {
        self.moments
            .keys()
            .map(|k| k.len() + std::mem::size_of::<RunningMoments>())
            .sum()
    }

    fn state_checksum(&self) -> u64 {
        let mut h = StateHasher::new();
        for (k, m) in &self.moments {
            h.str(k).u64(m.count).f64(m.mean).f64(m.m2);
        }
        h.finish()
    }
}
