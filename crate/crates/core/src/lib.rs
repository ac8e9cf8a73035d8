//! Hypernymy probing over transformer attention: taxonomy-driven dataset
//! construction, attention extraction, linear probing and analysis.

pub mod analysis;
pub mod attention;
pub mod dataset;
pub mod lexicon;
pub mod probe;
mod scalar;

pub use scalar::Scalar;

/// Layer x head matrix at store width.
pub type AttentionMatrixF32 = attention::AttentionMatrix<f32>;
/// Layer x head matrix at analysis width.
pub type AttentionMatrixF64 = attention::AttentionMatrix<f64>;
pub type AttentionTensorF32 = attention::AttentionTensor<f32>;
pub type FeatureVectorF32 = probe::FeatureVector<f32>;
pub type FeatureVectorF64 = probe::FeatureVector<f64>;
pub type ProbeModelF32 = probe::ProbeModel<f32>;
pub type ProbeModelF64 = probe::ProbeModel<f64>;
