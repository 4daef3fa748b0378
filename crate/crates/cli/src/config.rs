//! Resolved run configurations and the builders that turn them into sources
//! and models.

use serde::Serialize;
use streamcore::anomaly::{HalfSpaceTrees, HstConfig};
use streamcore::datasets::{
    gen_abrupt_drift, gen_biased_fair, gen_imbalanced_anomaly, read_csv_stream, AbruptDriftConfig,
    BiasedFairnessConfig, CsvStreamConfig, ImbalancedAnomalyConfig,
};
use streamcore::drift::AdwinConfig;
use streamcore::fairness::{CSmoteConfig, CSmoteLearner, Massaging, Reweighing, SensitiveSpec};
use streamcore::neural::{Autoencoder, AutoencoderConfig, Initializer, MlpClassifier, MlpConfig, SgdConfig};
use streamcore::preprocessing::{MinMaxScaler, StandardScaler};
use streamcore::stream::MajorityClass;
use streamcore::tree::{HoeffdingTree, HoeffdingTreeConfig};
use streamcore::{ClassId, Estimator, LabeledInstance, Pipeline};

use crate::args::DataArgs;
use crate::CliError;

pub type InstanceStream = Box<dyn Iterator<Item = streamcore::Result<LabeledInstance>> + Send>;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DataSpec {
    SynthAbrupt {
        n: u64,
        seed: u64,
        n_features: usize,
        n_concepts: usize,
        n_classes: usize,
        noise: f64,
        drift_positions: Vec<u64>,
    },
    SynthFraud {
        n: u64,
        seed: u64,
        n_features: usize,
        anomaly_rate: f64,
        separation: f64,
        rank: usize,
        noise: f64,
    },
    SynthFair {
        n: u64,
        seed: u64,
        n_features: usize,
        sensitive_feature: String,
        deprived_value: String,
        favored_value: String,
        deprived_share: f64,
        suppression: f64,
        proxy_strength: f64,
    },
    Csv {
        path: String,
        label: String,
        /// Column read as the categorical sensitive attribute.
        sensitive: Option<String>,
        n: Option<u64>,
    },
}

impl DataSpec {
    /// Resolves `--data` and its companion flags.
    pub fn resolve(
        args: &DataArgs,
        default_source: &str,
        default_n: u64,
        sensitive: Option<&str>,
    ) -> Result<Self, CliError> {
        let source = args.data.as_deref().unwrap_or(default_source);
        if let Some(path) = source.strip_prefix("csv:") {
            if path.is_empty() {
                return Err(CliError::Config("csv source needs a path: csv:<path>".into()));
            }
            return Ok(DataSpec::Csv {
                path: path.to_string(),
                label: args.label.clone(),
                sensitive: sensitive.map(String::from),
                n: args.n,
            });
        }
        let seed = || {
            args.seed
                .ok_or_else(|| CliError::Config(format!("--seed is required for {source}")))
        };
        let n = args.n.unwrap_or(default_n);
        if args.drift.is_some() && source != "synth-abrupt" {
            return Err(CliError::Config("--drift applies to synth-abrupt only".into()));
        }
        match source {
            "synth-abrupt" => {
                let d = AbruptDriftConfig::default();
                Ok(DataSpec::SynthAbrupt {
                    n,
                    seed: seed()?,
                    n_features: d.n_features,
                    n_concepts: d.n_concepts,
                    n_classes: d.n_classes,
                    noise: d.noise,
                    drift_positions: args.drift.clone().unwrap_or_else(|| vec![n / 2]),
                })
            }
            "synth-fraud" => {
                let d = ImbalancedAnomalyConfig::default();
                Ok(DataSpec::SynthFraud {
                    n,
                    seed: seed()?,
                    n_features: d.n_features,
                    anomaly_rate: d.anomaly_rate,
                    separation: d.separation,
                    rank: d.rank,
                    noise: d.noise,
                })
            }
            "synth-fair" => {
                let d = BiasedFairnessConfig::default();
                Ok(DataSpec::SynthFair {
                    n,
                    seed: seed()?,
                    n_features: d.n_features,
                    sensitive_feature: d.sensitive_feature,
                    deprived_value: d.deprived_value,
                    favored_value: d.favored_value,
                    deprived_share: d.deprived_share,
                    suppression: d.suppression,
                    proxy_strength: d.proxy_strength,
                })
            }
            other => Err(CliError::Config(format!(
                "unknown data source {other:?}; expected synth-abrupt, synth-fraud, synth-fair or csv:<path>"
            ))),
        }
    }

    /// Seed for model initialisation; CSV sources use 0 unless `--seed` is given.
    pub fn model_seed(&self, flag: Option<u64>) -> u64 {
        match self {
            DataSpec::SynthAbrupt { seed, .. }
            | DataSpec::SynthFraud { seed, .. }
            | DataSpec::SynthFair { seed, .. } => *seed,
            DataSpec::Csv { .. } => flag.unwrap_or(0),
        }
    }

    /// Sensitive attribute the source is generated with, if any.
    pub fn default_sensitive(&self, positive: ClassId) -> Option<SensitiveSpec> {
        match self {
            DataSpec::SynthFair {
                sensitive_feature,
                deprived_value,
                favored_value,
                ..
            } => Some(SensitiveSpec::new(
                sensitive_feature,
                deprived_value,
                favored_value,
                positive,
            )),
            _ => None,
        }
    }

    /// Opens a fresh single-pass source.
    pub fn open(&self) -> Result<InstanceStream, CliError> {
        Ok(match self.clone() {
            DataSpec::SynthAbrupt {
                n,
                seed,
                n_features,
                n_concepts,
                n_classes,
                noise,
                drift_positions,
            } => Box::new(
                gen_abrupt_drift(&AbruptDriftConfig {
                    n_features,
                    n_concepts,
                    drift_positions,
                    n_classes,
                    noise,
                    seed,
                })?
                .take(to_usize(n)),
            ),
            DataSpec::SynthFraud {
                n,
                seed,
                n_features,
                anomaly_rate,
                separation,
                rank,
                noise,
            } => Box::new(
                gen_imbalanced_anomaly(&ImbalancedAnomalyConfig {
                    n_features,
                    anomaly_rate,
                    separation,
                    rank,
                    noise,
                    seed,
                })?
                .take(to_usize(n)),
            ),
            DataSpec::SynthFair {
                n,
                seed,
                n_features,
                sensitive_feature,
                deprived_value,
                favored_value,
                deprived_share,
                suppression,
                proxy_strength,
            } => Box::new(
                gen_biased_fair(&BiasedFairnessConfig {
                    n_features,
                    sensitive_feature,
                    deprived_value,
                    favored_value,
                    deprived_share,
                    suppression,
                    proxy_strength,
                    seed,
                })?
                .map(|s| s.instance)
                .take(to_usize(n)),
            ),
            DataSpec::Csv {
                path,
                label,
                sensitive,
                n,
            } => {
                let mut cfg = CsvStreamConfig::new(path, &label);
                cfg.sensitive = sensitive;
                let source = read_csv_stream(&cfg)?;
                match n {
                    Some(n) => Box::new(source.take(to_usize(n))),
                    None => Box::new(source),
                }
            }
        })
    }
}

fn to_usize(n: u64) -> usize {
    usize::try_from(n).unwrap_or(usize::MAX)
}

/// Parses `feature[:deprived[:favored]]`; missing values default to
/// `deprived` and `favored`.
pub fn parse_sensitive(flag: &str, positive: ClassId) -> Result<SensitiveSpec, CliError> {
    let mut parts = flag.split(':');
    let feature = parts.next().unwrap_or_default();
    let deprived = parts.next().unwrap_or("deprived");
    let favored = parts.next().unwrap_or("favored");
    if parts.next().is_some() {
        return Err(CliError::Config(format!(
            "--sensitive takes feature[:deprived[:favored]], got {flag:?}"
        )));
    }
    let spec = SensitiveSpec::new(feature, deprived, favored, positive);
    spec.validate()?;
    Ok(spec)
}

/// Hoeffding tree settings recorded in output files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TreeParams {
    pub split_confidence: f64,
    pub grace_period: f64,
    pub tie_threshold: f64,
    pub max_node_count: usize,
    pub numeric_thresholds: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        let d = HoeffdingTreeConfig::default();
        Self {
            split_confidence: d.split_confidence,
            grace_period: d.grace_period,
            tie_threshold: d.tie_threshold,
            max_node_count: d.max_node_count,
            numeric_thresholds: d.numeric_thresholds,
        }
    }
}

impl TreeParams {
    fn config(&self, sensitive: Option<SensitiveSpec>) -> HoeffdingTreeConfig {
        HoeffdingTreeConfig {
            split_confidence: self.split_confidence,
            grace_period: self.grace_period,
            tie_threshold: self.tie_threshold,
            max_node_count: self.max_node_count,
            numeric_thresholds: self.numeric_thresholds,
            sensitive,
        }
    }
}

const MASSAGING_CHUNK: usize = 1000;
const QUANTILE_WARMUP: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ModelSpec {
    Majority,
    Ht {
        tree: TreeParams,
    },
    HtFair {
        tree: TreeParams,
    },
    HtReweigh {
        tree: TreeParams,
    },
    HtMassage {
        tree: TreeParams,
        chunk_size: usize,
    },
    HtCsmote {
        tree: TreeParams,
        neighbors: usize,
        capacity: usize,
        balance_target: f64,
        delta_change: f64,
        delta_warning: f64,
        seed: u64,
    },
    Mlp {
        hidden_layer_sizes: Vec<usize>,
        learning_rate: f64,
        seed: u64,
        scaler: String,
    },
    Autoencoder {
        latent_dim: usize,
        learning_rate: f64,
        seed: u64,
        scaler: String,
        q: f64,
        warmup: u64,
    },
    Hst {
        n_trees: usize,
        height: usize,
        window_size: u32,
        size_limit: f64,
        seed: u64,
        scaler: String,
        q: f64,
        warmup: u64,
    },
}

impl ModelSpec {
    /// Resolves a classifier name.
    pub fn classifier(name: &str, hidden: &[usize], lr: f64, seed: u64, deltas: (f64, f64)) -> Result<Self, CliError> {
        let tree = TreeParams::default();
        Ok(match name {
            "majority" => ModelSpec::Majority,
            "ht" => ModelSpec::Ht { tree },
            "ht-fair" => ModelSpec::HtFair { tree },
            "ht-reweigh" => ModelSpec::HtReweigh { tree },
            "ht-massage" => ModelSpec::HtMassage {
                tree,
                chunk_size: MASSAGING_CHUNK,
            },
            "ht-csmote" => {
                let d = CSmoteConfig::default();
                ModelSpec::HtCsmote {
                    tree,
                    neighbors: d.neighbors,
                    capacity: d.capacity,
                    balance_target: d.balance_target,
                    delta_change: deltas.0,
                    delta_warning: deltas.1,
                    seed,
                }
            }
            "mlp" => {
                if hidden.is_empty() || hidden.contains(&0) {
                    return Err(CliError::Config("--hidden sizes must be positive".into()));
                }
                ModelSpec::Mlp {
                    hidden_layer_sizes: hidden.to_vec(),
                    learning_rate: lr,
                    seed,
                    scaler: "standard".into(),
                }
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown classifier {other:?}; expected ht, ht-fair, ht-reweigh, ht-massage, ht-csmote, mlp or majority"
                )))
            }
        })
    }

    /// Resolves an anomaly detector name.
    pub fn detector(name: &str, latent: usize, lr: f64, q: f64, window: u32, seed: u64) -> Result<Self, CliError> {
        Ok(match name {
            "autoencoder" | "ae" => ModelSpec::Autoencoder {
                latent_dim: latent,
                learning_rate: lr,
                seed,
                scaler: "min-max".into(),
                q,
                warmup: QUANTILE_WARMUP,
            },
            "hst" => {
                let d = HstConfig::default();
                ModelSpec::Hst {
                    n_trees: d.n_trees,
                    height: d.height,
                    window_size: window,
                    size_limit: d.size_limit,
                    seed,
                    scaler: "min-max".into(),
                    q,
                    warmup: QUANTILE_WARMUP,
                }
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown detector {other:?}; expected autoencoder or hst"
                )))
            }
        })
    }

    /// File stem of the run's outputs.
    pub fn slug(&self) -> &'static str {
        match self {
            ModelSpec::Majority => "majority",
            ModelSpec::Ht { .. } => "ht",
            ModelSpec::HtFair { .. } => "ht-fair",
            ModelSpec::HtReweigh { .. } => "ht-reweigh",
            ModelSpec::HtMassage { .. } => "ht-massage",
            ModelSpec::HtCsmote { .. } => "ht-csmote",
            ModelSpec::Mlp { .. } => "mlp",
            ModelSpec::Autoencoder { .. } => "autoencoder",
            ModelSpec::Hst { .. } => "hst",
        }
    }

    /// Whether the model consumes a sensitive attribute.
    pub fn needs_sensitive(&self) -> bool {
        matches!(
            self,
            ModelSpec::HtFair { .. } | ModelSpec::HtReweigh { .. } | ModelSpec::HtMassage { .. }
        )
    }

    /// Quantile and warmup of detector specs.
    pub fn filter(&self) -> Option<(f64, u64)> {
        match self {
            ModelSpec::Autoencoder { q, warmup, .. } | ModelSpec::Hst { q, warmup, .. } => Some((*q, *warmup)),
            _ => None,
        }
    }

    pub fn build(&self, sensitive: Option<&SensitiveSpec>) -> Result<Box<dyn Estimator>, CliError> {
        let need = || {
            sensitive
                .cloned()
                .ok_or_else(|| CliError::Config(format!("{} needs --sensitive", self.slug())))
        };
        Ok(match self {
            ModelSpec::Majority => Box::new(MajorityClass::new()),
            ModelSpec::Ht { tree } => Box::new(HoeffdingTree::new(tree.config(None))?),
            ModelSpec::HtFair { tree } => Box::new(HoeffdingTree::new(tree.config(Some(need()?)))?),
            ModelSpec::HtReweigh { tree } => {
                Box::new(Reweighing::new(HoeffdingTree::new(tree.config(None))?, need()?)?)
            }
            ModelSpec::HtMassage { tree, chunk_size } => Box::new(Massaging::new(
                HoeffdingTree::new(tree.config(None))?,
                need()?,
                *chunk_size,
            )?),
            ModelSpec::HtCsmote {
                tree,
                neighbors,
                capacity,
                balance_target,
                delta_change,
                delta_warning,
                seed,
            } => {
                let cfg = CSmoteConfig {
                    neighbors: *neighbors,
                    capacity: *capacity,
                    balance_target: *balance_target,
                    adwin: AdwinConfig {
                        delta_change: *delta_change,
                        delta_warning: *delta_warning,
                        ..AdwinConfig::default()
                    },
                    seed: *seed,
                };
                Box::new(CSmoteLearner::new(HoeffdingTree::new(tree.config(None))?, cfg)?)
            }
            ModelSpec::Mlp {
                hidden_layer_sizes,
                learning_rate,
                seed,
                ..
            } => {
                let mlp = MlpClassifier::new(MlpConfig {
                    hidden_layer_sizes: hidden_layer_sizes.clone(),
                    sgd: SgdConfig {
                        learning_rate: *learning_rate,
                        seed: *seed,
                    },
                    init: Initializer::Glorot,
                })?;
                Box::new(Pipeline::new(vec![Box::new(StandardScaler::new())], Box::new(mlp))?)
            }
            ModelSpec::Autoencoder {
                latent_dim,
                learning_rate,
                seed,
                ..
            } => {
                let ae = Autoencoder::new(AutoencoderConfig {
                    latent_dim: *latent_dim,
                    sgd: SgdConfig {
                        learning_rate: *learning_rate,
                        seed: *seed,
                    },
                    ..AutoencoderConfig::default()
                })?;
                Box::new(Pipeline::new(vec![Box::new(MinMaxScaler::new())], Box::new(ae))?)
            }
            ModelSpec::Hst {
                n_trees,
                height,
                window_size,
                size_limit,
                seed,
                ..
            } => {
                let hst = HalfSpaceTrees::new(HstConfig {
                    n_trees: *n_trees,
                    height: *height,
                    window_size: *window_size,
                    size_limit: *size_limit,
                    seed: *seed,
                })?;
                Box::new(Pipeline::new(vec![Box::new(MinMaxScaler::new())], Box::new(hst))?)
            }
        })
    }
}
