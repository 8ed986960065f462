//! Lightweight generative modeling of QoE over network telemetry.
//!
//! The pipeline turns multivariate telemetry time series into discrete token
//! sequences with a k-means codebook ([`vq`]), fits a first-order hidden
//! Markov model over labeled QoE states ([`hmm`]), decodes unseen sessions
//! with Viterbi, and measures accuracy and inference latency against two
//! memoryless baselines and a scalar-binning discretizer ([`baselines`],
//! [`eval`]). Synthetic session generators ([`synth`]) provide controlled
//! workloads, and [`artifact`] persists every fitted object as versioned
//! JSON.
//!
//! All numeric kernels are generic over the [`Real`] scalar (`f32` or
//! `f64`); the aliases at the crate root pin the default double-precision
//! lane.

pub mod artifact;
pub mod baselines;
pub mod eval;
pub mod hmm;
pub mod ingest;
pub mod num;
pub mod synth;
pub mod vq;

pub use num::Real;

/// `f64`-backed telemetry record.
pub type FeatureRecord = ingest::FeatureRecord<f64>;
/// `f64`-backed session time series.
pub type SessionSeries = ingest::SessionSeries<f64>;
/// `f64`-backed dataset.
pub type Dataset = ingest::Dataset<f64>;
/// `f64`-backed standardization parameters.
pub type StandardizationParams = ingest::StandardizationParams<f64>;
/// `f64`-backed synthetic-data generator spec.
pub type GeneratorSpec = synth::GeneratorSpec<f64>;
/// `f64`-backed k-means codebook.
pub type Codebook = vq::Codebook<f64>;
/// `f64`-backed scalar-binning scheme.
pub type BinningScheme = vq::BinningScheme<f64>;
/// `f64`-backed HMM parameter set.
pub type HmmParams = hmm::HmmParams<f64>;
/// `f64`-backed Viterbi decode result.
pub type DecodedSequence = hmm::DecodedSequence<f64>;
/// `f64`-backed token MAP classifier.
pub type TokenClassifier = baselines::TokenClassifier<f64>;
/// `f64`-backed Gaussian naive Bayes classifier.
pub type GaussianNB = baselines::GaussianNB<f64>;
