//! Flag definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "streamcore",
    version,
    about = "Reproducible single-pass online learning runs that emit CSV and JSON metric files"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prequential classification; writes <out>/<model>.csv and <model>.json.
    Classify(ClassifyArgs),
    /// Prequential classification with cumulative statistical parity and
    /// equal opportunity columns.
    Fairness(ClassifyArgs),
    /// Scores, thresholds and classifies an anomaly stream. Several
    /// comma-separated models also write <out>/comparison.json.
    Anomaly(AnomalyArgs),
    /// Runs an MLP depth by width grid and writes <out>/compare.json.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// synth-abrupt, synth-fraud, synth-fair or csv:<path>.
    #[arg(long)]
    pub data: Option<String>,
    /// Number of instances; CSV sources default to the whole file.
    #[arg(long)]
    pub n: Option<u64>,
    /// Seed; required for synthetic sources.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated drift positions for synth-abrupt; defaults to n/2.
    #[arg(long, value_delimiter = ',')]
    pub drift: Option<Vec<u64>>,
    /// Label column of CSV sources.
    #[arg(long, default_value = "label")]
    pub label: String,
    /// Output directory.
    #[arg(long, default_value = "streamcore-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// ht, ht-fair, ht-reweigh, ht-massage, ht-csmote, mlp or majority.
    #[arg(long)]
    pub model: Option<String>,
    /// Comma-separated hidden layer sizes of the MLP.
    #[arg(long, value_delimiter = ',', default_value = "64")]
    pub hidden: Vec<usize>,
    /// MLP learning rate.
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// Records are written every `stride` instances.
    #[arg(long, default_value_t = 100)]
    pub stride: u64,
    /// Rolling accuracy window.
    #[arg(long, default_value_t = 500)]
    pub window: usize,
    /// Sensitive attribute as feature[:deprived[:favored]].
    #[arg(long)]
    pub sensitive: Option<String>,
    /// Class id treated as the positive outcome.
    #[arg(long, default_value_t = 1)]
    pub positive: u32,
    /// ADWIN change confidence of ht-csmote.
    #[arg(long, default_value_t = 0.002)]
    pub delta_change: f64,
    /// ADWIN warning confidence of ht-csmote.
    #[arg(long, default_value_t = 0.01)]
    pub delta_warning: f64,
    /// Measures wall-clock learn and predict time.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AnomalyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated detectors: autoencoder, hst.
    #[arg(long, value_delimiter = ',', default_value = "autoencoder")]
    pub model: Vec<String>,
    /// Autoencoder latent width.
    #[arg(long, default_value_t = 64)]
    pub latent: usize,
    /// Autoencoder learning rate.
    #[arg(long, default_value_t = 0.25)]
    pub lr: f64,
    /// Quantile of previous scores used as the threshold.
    #[arg(long, default_value_t = 0.99)]
    pub q: f64,
    /// Half-Space Trees window size.
    #[arg(long, default_value_t = 250)]
    pub window: u32,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated hidden layer counts of the grid.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub layers: Vec<usize>,
    /// Comma-separated layer widths of the grid.
    #[arg(long, value_delimiter = ',', default_value = "16,64")]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub stride: u64,
    #[arg(long, default_value_t = 500)]
    pub window: usize,
    #[arg(long, default_value_t = 1)]
    pub positive: u32,
    /// Reports total wall-clock runtime per architecture.
    #[arg(long)]
    pub timing: bool,
}
