//! Stream sources: a row-at-a-time CSV reader and seeded synthetic generators.
//!
//! Generators are pure functions of their configuration: equal configs give
//! equal streams. None of them keeps emitted instances.

use std::collections::HashMap;
use std::fs::File;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stream::{ClassId, FeatureValue, Instance, Label, LabeledInstance, StreamSource};

#[derive(Debug, Clone, PartialEq)]
pub struct CsvStreamConfig {
    pub path: PathBuf,
    pub label: String,
    /// Column read as categorical even when its values look numeric.
    pub sensitive: Option<String>,
    pub delimiter: u8,
    /// Without a header, columns are named `c0`, `c1`, ...
    pub has_header: bool,
}

impl CsvStreamConfig {
    pub fn new(path: impl Into<PathBuf>, label: &str) -> Self {
        Self {
            path: path.into(),
            label: label.to_string(),
            sensitive: None,
            delimiter: b',',
            has_header: true,
        }
    }
}

/// Maps label strings to class ids: integers map to themselves, anything else
/// gets the next free id in order of appearance.
#[derive(Debug, Default)]
struct LabelEncoder {
    named: HashMap<String, ClassId>,
    next: u32,
}

impl LabelEncoder {
    fn encode(&mut self, raw: &str) -> ClassId {
        let raw = raw.trim();
        if let Ok(v) = raw.parse::<u32>() {
            self.next = self.next.max(v.saturating_add(1));
            return ClassId(v);
        }
        match raw.to_ascii_lowercase().as_str() {
            "true" => return ClassId(1),
            "false" => return ClassId(0),
            _ => {}
        }
        if let Some(c) = self.named.get(raw) {
            return *c;
        }
        let c = ClassId(self.next);
        self.next += 1;
        self.named.insert(raw.to_string(), c);
        c
    }
}

/// Buffer size of the underlying CSV reader.
const CSV_BUFFER: usize = 8 * 1024;

/// Streams the rows of a CSV file as labeled instances in file order.
pub fn read_csv_stream(cfg: &CsvStreamConfig) -> Result<StreamSource<LabeledInstance>> {
    let file = File::open(&cfg.path)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(cfg.delimiter)
        .has_headers(cfg.has_header)
        .buffer_capacity(CSV_BUFFER)
        .flexible(false)
        .from_reader(file);
    let names: Vec<String> = if cfg.has_header {
        reader.headers()?.iter().map(|h| h.trim().to_string()).collect()
    } else {
        let mut first = csv::StringRecord::new();
        let peek = csv::ReaderBuilder::new()
            .delimiter(cfg.delimiter)
            .has_headers(false)
            .from_path(&cfg.path)?
            .read_record(&mut first)?;
        if !peek {
            Vec::new()
        } else {
            (0..first.len()).map(|i| format!("c{i}")).collect()
        }
    };
    let label_idx = names
        .iter()
        .position(|n| *n == cfg.label)
        .ok_or_else(|| Error::Config(format!("label column `{}` not found", cfg.label)))?;
    if let Some(s) = &cfg.sensitive {
        if !names.contains(s) {
            return Err(Error::Config(format!("sensitive column `{s}` not found")));
        }
    }
    let sensitive = cfg.sensitive.clone();
    let memory = CSV_BUFFER + names.iter().map(|n| n.len() + 24).sum::<usize>();
    let mut encoder = LabelEncoder::default();
    let records = reader.into_records();
    let header_rows = u64::from(cfg.has_header);
    let rows = records.enumerate().map(move |(i, rec)| {
        let row = i as u64 + 1 + header_rows;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let mut x = Instance::with_capacity(names.len().saturating_sub(1));
        let mut label = None;
        for (j, field) in rec.iter().enumerate() {
            let field = field.trim();
            if j == label_idx {
                if field.is_empty() {
                    return Err(Error::Parse {
                        row,
                        message: "empty label".into(),
                    });
                }
                label = Some(encoder.encode(field));
                continue;
            }
            if field.is_empty() {
                continue;
            }
            let name = &names[j];
            if sensitive.as_deref() == Some(name.as_str()) {
                x.insert(name.as_str(), FeatureValue::Categorical(field.to_string()));
                continue;
            }
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => x.insert(name.as_str(), v),
                Ok(v) => {
                    return Err(Error::Parse {
                        row,
                        message: format!("non-finite value {v} in column `{name}`"),
                    })
                }
                Err(_) => x.insert(name.as_str(), FeatureValue::Categorical(field.to_string())),
            }
        }
        let y = label.ok_or_else(|| Error::Parse {
            row,
            message: "missing label".into(),
        })?;
        Ok(LabeledInstance::new(x, Label::Class(y)))
    });
    Ok(StreamSource::from_results(rows).with_memory_bytes(memory))
}

fn feature_names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbruptDriftConfig {
    pub n_features: usize,
    /// Distinct concepts; segment `s` uses concept `s mod n_concepts`.
    pub n_concepts: usize,
    /// Steps (0-based) at which the next segment starts.
    pub drift_positions: Vec<u64>,
    pub n_classes: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for AbruptDriftConfig {
    fn default() -> Self {
        Self {
            n_features: 5,
            n_concepts: 2,
            drift_positions: Vec::new(),
            n_classes: 2,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl AbruptDriftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 || self.n_concepts == 0 || self.n_classes < 2 {
            return Err(Error::Config(
                "drift stream needs features, a concept and at least two classes".into(),
            ));
        }
        if !self.drift_positions.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("drift positions must be strictly increasing".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config("noise rate must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// A linear concept over `[0, 1]^d`: the label is the argmax of one centred
/// linear score per class (for two classes, a hyperplane through the centre).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConcept {
    pub weights: Vec<Vec<f64>>,
}

impl LinearConcept {
    fn random(rng: &mut ChaCha8Rng, d: usize, classes: usize) -> Self {
        let rows = if classes == 2 { 1 } else { classes };
        Self {
            weights: (0..rows).map(|_| unit_vector(rng, d)).collect(),
        }
    }

    pub fn label(&self, v: &[f64]) -> ClassId {
        let score = |w: &Vec<f64>| w.iter().zip(v).map(|(w, x)| w * (x - 0.5)).sum::<f64>();
        if self.weights.len() == 1 {
            return ClassId(u32::from(score(&self.weights[0]) > 0.0));
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (c, w) in self.weights.iter().enumerate() {
            let s = score(w);
            if s > best.1 {
                best = (c, s);
            }
        }
        ClassId(best.0 as u32)
    }
}

/// Piecewise-stationary stream over uniform features `x0..x{d-1}`.
pub fn gen_abrupt_drift(cfg: &AbruptDriftConfig) -> Result<StreamSource<LabeledInstance>> {
    cfg.validate()?;
    let cfg = cfg.clone();
    let mut concept_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let concepts: Vec<LinearConcept> = (0..cfg.n_concepts)
        .map(|_| LinearConcept::random(&mut concept_rng, cfg.n_features, cfg.n_classes))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let names = feature_names("x", cfg.n_features);
    let memory =
        concepts.len() * cfg.n_features * cfg.n_classes * 8 + names.iter().map(|n| n.len() + 24).sum::<usize>();
    let mut step = 0u64;
    let mut segment = 0usize;
    let iter = std::iter::from_fn(move || {
        while segment < cfg.drift_positions.len() && step >= cfg.drift_positions[segment] {
            segment += 1;
        }
        let concept = &concepts[segment % concepts.len()];
        let v: Vec<f64> = (0..cfg.n_features).map(|_| rng.random()).collect();
        let mut y = concept.label(&v);
        if cfg.noise > 0.0 && rng.random_bool(cfg.noise) {
            let shift = rng.random_range(1..cfg.n_classes as u32);
            y = ClassId((y.0 + shift) % cfg.n_classes as u32);
        }
        step += 1;
        let x = Instance::from_numeric(names.iter().map(String::as_str).zip(v));
        Some(LabeledInstance::new(x, Label::Class(y)))
    });
    Ok(StreamSource::from_iterator(iter).with_memory_bytes(memory))
}

/// Concepts used by [`gen_abrupt_drift`], in segment order modulo their count.
pub fn abrupt_drift_concepts(cfg: &AbruptDriftConfig) -> Result<Vec<LinearConcept>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.n_concepts)
        .map(|_| LinearConcept::random(&mut rng, cfg.n_features, cfg.n_classes))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImbalancedAnomalyConfig {
    pub n_features: usize,
    pub anomaly_rate: f64,
    /// Distance between the normal and the anomalous cluster centres.
    pub separation: f64,
    /// Latent dimensions of the normal cluster's covariance.
    pub rank: usize,
    /// Per-feature noise on top of the latent structure.
    pub noise: f64,
    pub seed: u64,
}

impl Default for ImbalancedAnomalyConfig {
    fn default() -> Self {
        Self {
            n_features: 10,
            anomaly_rate: 0.01,
            separation: 0.6,
            rank: 3,
            noise: 0.03,
            seed: 0,
        }
    }
}

impl ImbalancedAnomalyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 || self.rank == 0 {
            return Err(Error::Config("anomaly stream needs features and a latent rank".into()));
        }
        if !(self.anomaly_rate > 0.0 && self.anomaly_rate < 0.5) {
            return Err(Error::Config("anomaly rate must lie in (0, 0.5)".into()));
        }
        if !(self.separation >= 0.0 && self.noise >= 0.0) {
            return Err(Error::Config("separation and noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Normal instances from one correlated Gaussian cluster, anomalies from the
/// same cluster shifted by `separation` along a random direction; all
/// features clipped to `[0, 1]`. Labels are [`Label::Anomaly`].
pub fn gen_imbalanced_anomaly(cfg: &ImbalancedAnomalyConfig) -> Result<StreamSource<LabeledInstance>> {
    cfg.validate()?;
    let cfg = cfg.clone();
    let d = cfg.n_features;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let center: Vec<f64> = (0..d).map(|_| rng.random_range(0.35..0.65)).collect();
    // loadings scaled so every feature has latent standard deviation 0.08
    let loadings: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            let row = unit_vector(&mut rng, cfg.rank);
            row.into_iter().map(|v| v * 0.08).collect()
        })
        .collect();
    let direction = unit_vector(&mut rng, d);
    let names = feature_names("v", d);
    let memory = (d * (cfg.rank + 2)) * 8 + names.iter().map(|n| n.len() + 24).sum::<usize>();
    let iter = std::iter::from_fn(move || {
        let anomalous = rng.random_bool(cfg.anomaly_rate);
        let z: Vec<f64> = (0..cfg.rank).map(|_| normal(&mut rng)).collect();
        let shift = if anomalous { cfg.separation } else { 0.0 };
        let v: Vec<f64> = (0..d)
            .map(|i| {
                let latent: f64 = loadings[i].iter().zip(&z).map(|(l, z)| l * z).sum();
                let e = cfg.noise * normal(&mut rng);
                (center[i] + latent + e + shift * direction[i]).clamp(0.0, 1.0)
            })
            .collect();
        let x = Instance::from_numeric(names.iter().map(String::as_str).zip(v));
        Some(LabeledInstance::new(x, Label::Anomaly(anomalous)))
    });
    Ok(StreamSource::from_iterator(iter).with_memory_bytes(memory))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasedFairnessConfig {
    /// Numeric features of the base concept.
    pub n_features: usize,
    pub sensitive_feature: String,
    pub deprived_value: String,
    pub favored_value: String,
    pub deprived_share: f64,
    /// Probability that a deprived positive keeps its label.
    pub suppression: f64,
    /// How strongly the `proxy` feature reveals group membership, in `[0, 1]`.
    pub proxy_strength: f64,
    pub seed: u64,
}

impl Default for BiasedFairnessConfig {
    fn default() -> Self {
        Self {
            n_features: 4,
            sensitive_feature: "group".into(),
            deprived_value: "deprived".into(),
            favored_value: "favored".into(),
            deprived_share: 0.5,
            suppression: 0.5,
            proxy_strength: 0.5,
            seed: 0,
        }
    }
}

impl BiasedFairnessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 {
            return Err(Error::Config("fairness stream needs features".into()));
        }
        if !(self.suppression > 0.0 && self.suppression <= 1.0) {
            return Err(Error::Config("suppression must lie in (0, 1]".into()));
        }
        if !(self.deprived_share > 0.0 && self.deprived_share < 1.0) {
            return Err(Error::Config("deprived share must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.proxy_strength) {
            return Err(Error::Config("proxy strength must lie in [0, 1]".into()));
        }
        if self.deprived_value == self.favored_value {
            return Err(Error::Config("group values must differ".into()));
        }
        Ok(())
    }
}

/// One biased instance and the label it would have had without bias.
#[derive(Debug, Clone, PartialEq)]
pub struct FairSample {
    pub instance: LabeledInstance,
    pub unbiased: Label,
}

/// Base concept labels over uniform features, with deprived positives flipped
/// to negative with probability `1 − suppression`.
pub fn gen_biased_fair(cfg: &BiasedFairnessConfig) -> Result<StreamSource<FairSample>> {
    cfg.validate()?;
    let cfg = cfg.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let concept = LinearConcept::random(&mut rng, cfg.n_features, 2);
    let names = feature_names("x", cfg.n_features);
    let memory = cfg.n_features * 8 + names.iter().map(|n| n.len() + 24).sum::<usize>();
    let iter = std::iter::from_fn(move || {
        let deprived = rng.random_bool(cfg.deprived_share);
        let v: Vec<f64> = (0..cfg.n_features).map(|_| rng.random()).collect();
        let unbiased = concept.label(&v);
        let y = if deprived && unbiased == ClassId(1) && !rng.random_bool(cfg.suppression) {
            ClassId(0)
        } else {
            unbiased
        };
        let centre = if deprived {
            0.5 - cfg.proxy_strength / 2.0
        } else {
            0.5 + cfg.proxy_strength / 2.0
        };
        let proxy = (centre + 0.15 * normal(&mut rng)).clamp(0.0, 1.0);
        let mut x = Instance::from_numeric(names.iter().map(String::as_str).zip(v));
        x.insert("proxy", proxy);
        let group = if deprived {
            &cfg.deprived_value
        } else {
            &cfg.favored_value
        };
        x.insert(cfg.sensitive_feature.as_str(), FeatureValue::Categorical(group.clone()));
        Some(FairSample {
            instance: LabeledInstance::new(x, Label::Class(y)),
            unbiased: Label::Class(unbiased),
        })
    });
    Ok(StreamSource::from_iterator(iter).with_memory_bytes(memory))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_rows_in_order_with_types() {
        let f = write_csv("a,color,y\n3.5,red,1\n-1,blue,0\n2,red,1\n");
        let rows: Vec<_> = read_csv_stream(&CsvStreamConfig::new(f.path(), "y"))
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].x.get("a"), Some(&FeatureValue::Numeric(3.5)));
        assert_eq!(rows[0].x.get("color"), Some(&FeatureValue::Categorical("red".into())));
        assert_eq!(rows[1].y, Label::Class(ClassId(0)));
        assert_eq!(rows[2].x.numeric("a"), Some(2.0));
        assert!(!rows[0].x.contains("y"));
    }

    #[test]
    fn csv_missing_label_column_is_config_error() {
        let f = write_csv("a,b\n1,2\n");
        assert!(matches!(
            read_csv_stream(&CsvStreamConfig::new(f.path(), "y")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn csv_parse_errors_carry_row_numbers() {
        let f = write_csv("a,y\n1,0\n2,1\n3\n");
        let out: Vec<_> = read_csv_stream(&CsvStreamConfig::new(f.path(), "y")).unwrap().collect();
        assert!(out[0].is_ok() && out[1].is_ok());
        assert!(matches!(out[2], Err(Error::Parse { row: 4, .. })), "{:?}", out[2]);
        let f = write_csv("a,y\n1,0\ninf,1\n");
        let out: Vec<_> = read_csv_stream(&CsvStreamConfig::new(f.path(), "y")).unwrap().collect();
        assert!(matches!(out[1], Err(Error::Parse { row: 3, .. })));
    }

    #[test]
    fn csv_named_labels_and_no_header() {
        let f = write_csv("0.5;yes;m\n0.7;no;f\n0.1;yes;f\n");
        let cfg = CsvStreamConfig {
            delimiter: b';',
            has_header: false,
            sensitive: Some("c2".into()),
            ..CsvStreamConfig::new(f.path(), "c1")
        };
        let rows: Vec<_> = read_csv_stream(&cfg).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(rows[0].y, rows[2].y);
        assert_ne!(rows[0].y, rows[1].y);
        assert_eq!(rows[1].x.get("c2"), Some(&FeatureValue::Categorical("f".into())));
    }

    #[test]
    fn csv_memory_does_not_grow_with_rows() {
        let mut small = String::from("a,b,y\n");
        let mut large = small.clone();
        for i in 0..1_000 {
            small.push_str(&format!("{i},{},{}\n", i * 2, i % 2));
        }
        for i in 0..100_000 {
            large.push_str(&format!("{i},{},{}\n", i * 2, i % 2));
        }
        let (fs, fl) = (write_csv(&small), write_csv(&large));
        let mut s = read_csv_stream(&CsvStreamConfig::new(fs.path(), "y")).unwrap();
        let mut l = read_csv_stream(&CsvStreamConfig::new(fl.path(), "y")).unwrap();
        assert_eq!(s.by_ref().count(), 1_000);
        assert_eq!(l.by_ref().count(), 100_000);
        assert_eq!(s.memory_bytes(), l.memory_bytes());
        assert_eq!(l.consumed(), 100_000);
    }

    #[test]
    fn generators_are_deterministic() {
        let cfg = AbruptDriftConfig {
            drift_positions: vec![50],
            noise: 0.1,
            seed: 9,
            ..AbruptDriftConfig::default()
        };
        let a: Vec<_> = gen_abrupt_drift(&cfg)
            .unwrap()
            .take(200)
            .collect::<Result<_>>()
            .unwrap();
        let b: Vec<_> = gen_abrupt_drift(&cfg)
            .unwrap()
            .take(200)
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(a, b);
        let an = ImbalancedAnomalyConfig::default();
        let a: Vec<_> = gen_imbalanced_anomaly(&an)
            .unwrap()
            .take(200)
            .collect::<Result<_>>()
            .unwrap();
        let b: Vec<_> = gen_imbalanced_anomaly(&an)
            .unwrap()
            .take(200)
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(a, b);
        let fc = BiasedFairnessConfig::default();
        let a: Vec<_> = gen_biased_fair(&fc).unwrap().take(200).collect::<Result<_>>().unwrap();
        let b: Vec<_> = gen_biased_fair(&fc).unwrap().take(200).collect::<Result<_>>().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn drift_positions_must_increase() {
        let cfg = AbruptDriftConfig {
            drift_positions: vec![10, 10],
            ..AbruptDriftConfig::default()
        };
        assert!(gen_abrupt_drift(&cfg).is_err());
    }

    #[test]
    fn stationary_stream_follows_one_concept() {
        let cfg = AbruptDriftConfig {
            seed: 4,
            n_classes: 3,
            ..AbruptDriftConfig::default()
        };
        let concept = &abrupt_drift_concepts(&cfg).unwrap()[0];
        let names = feature_names("x", 5);
        for xi in gen_abrupt_drift(&cfg).unwrap().take(2000) {
            let xi = xi.unwrap();
            let v: Vec<f64> = names.iter().map(|n| xi.x.numeric(n).unwrap()).collect();
            assert_eq!(xi.y, Label::Class(concept.label(&v)));
        }
    }

    #[test]
    fn drift_switches_concept_at_the_position() {
        let cfg = AbruptDriftConfig {
            drift_positions: vec![1000],
            seed: 5,
            ..AbruptDriftConfig::default()
        };
        let concepts = abrupt_drift_concepts(&cfg).unwrap();
        let names = feature_names("x", 5);
        for (i, xi) in gen_abrupt_drift(&cfg).unwrap().take(2000).enumerate() {
            let xi = xi.unwrap();
            let v: Vec<f64> = names.iter().map(|n| xi.x.numeric(n).unwrap()).collect();
            let k = usize::from(i >= 1000);
            assert_eq!(xi.y, Label::Class(concepts[k].label(&v)));
        }
    }

    #[test]
    fn anomaly_count_is_binomial() {
        for seed in 0..3 {
            let cfg = ImbalancedAnomalyConfig {
                seed,
                ..ImbalancedAnomalyConfig::default()
            };
            let mut anomalies = 0;
            for xi in gen_imbalanced_anomaly(&cfg).unwrap().take(20_000) {
                let xi = xi.unwrap();
                assert!(xi.x.numeric_features().all(|(_, v)| (0.0..=1.0).contains(&v)));
                anomalies += usize::from(xi.y == Label::Anomaly(true));
            }
            assert!((140..=260).contains(&anomalies), "{anomalies}");
        }
    }

    #[test]
    fn suppression_halves_deprived_positive_rate() {
        let cfg = BiasedFairnessConfig {
            seed: 3,
            ..BiasedFairnessConfig::default()
        };
        let (mut fav, mut fav_pos, mut dep, mut dep_pos) = (0.0, 0.0, 0.0, 0.0);
        for s in gen_biased_fair(&cfg).unwrap().take(10_000) {
            let s = s.unwrap();
            let positive = s.instance.y == Label::Class(ClassId(1));
            match s.instance.x.get("group").map(FeatureValue::key).as_deref() {
                Some("deprived") => {
                    dep += 1.0;
                    dep_pos += f64::from(u8::from(positive));
                }
                Some("favored") => {
                    fav += 1.0;
                    fav_pos += f64::from(u8::from(positive));
                }
                other => panic!("missing group: {other:?}"),
            }
        }
        let ratio = (dep_pos / dep) / (fav_pos / fav);
        assert!((ratio - 0.5).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn no_suppression_means_no_bias() {
        let cfg = BiasedFairnessConfig {
            suppression: 1.0,
            seed: 8,
            ..BiasedFairnessConfig::default()
        };
        for s in gen_biased_fair(&cfg).unwrap().take(2000) {
            let s = s.unwrap();
            assert_eq!(s.instance.y, s.unbiased);
        }
    }
}
