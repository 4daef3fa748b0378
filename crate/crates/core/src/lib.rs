//! Online machine learning over unbounded streams.
//!
//! Every learner processes one instance at a time, inspects it at most once,
//! keeps memory bounded and can answer a query at any point of the stream.
//! The crate is organised as follows:
//!
//! * [`stream`]: instances, predictions, the [`Estimator`] contract, pipelines
//!   and single-pass stream sources.
//! * [`preprocessing`]: running min-max and standard scalers.
//! * [`drift`]: ADWIN and EDDM drift detectors.
//! * [`tree`]: Hoeffding tree with optional fairness-aware split scoring.
//! * [`neural`]: dense networks with hand-written gradients, an online MLP
//!   classifier and an online autoencoder.
//! * [`anomaly`]: Half-Space Trees, the P² quantile filter and the
//!   score-classify-learn anomaly loop.
//! * [`fairness`]: cumulative parity trackers, re-weighting, massaging and
//!   C-SMOTE.
//! * [`evaluation`]: prequential evaluation and streaming metrics.
//! * [`datasets`]: CSV streams and seeded synthetic generators.

pub mod anomaly;
pub mod datasets;
pub mod drift;
pub mod error;
pub mod evaluation;
pub mod fairness;
pub mod neural;
pub mod preprocessing;
pub mod stream;
pub mod tree;

pub use error::{Error, Result};
pub use stream::{
    Capabilities, ClassDistribution, ClassId, Estimator, FeatureValue, Instance, Label, LabeledInstance, Pipeline,
    Prediction, StreamSource,
};
