//! Implicit semantic communication over knowledge bases.
//!
//! A source user's multi-hop reasoning over a knowledge base is observed as a
//! set of expert paths. The destination learns a reasoning policy that
//! reproduces the expert path distribution by adversarial imitation: a
//! comparator scores path embeddings, and the policy is trained by policy
//! gradient against it. The learned policy is then used to recover entity
//! packets corrupted on a noisy channel.
//!
//! The numeric types are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which the experiments use.

pub mod baselines;
pub mod channel;
pub mod comparator;
pub mod embedding;
pub mod error;
pub mod gaml;
pub mod kg;
pub mod neural;
pub mod policy;
pub mod rng;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use kg::{EntityId, KnowledgeBase, PathSet, PathSource, ReasoningPath, RelationId, Triple};
pub use scalar::Scalar;

pub type DenseNet64 = neural::DenseNet<f64>;
pub type EmbeddingTable64 = embedding::EmbeddingTable<f64>;
pub type PolicyModel64 = policy::PolicyModel<f64>;
pub type ComparatorModel64 = comparator::ComparatorModel<f64>;
pub type TrainOutcome64 = gaml::TrainOutcome<f64>;

pub type DenseNet32 = neural::DenseNet<f32>;
pub type EmbeddingTable32 = embedding::EmbeddingTable<f32>;
pub type PolicyModel32 = policy::PolicyModel<f32>;
pub type ComparatorModel32 = comparator::ComparatorModel<f32>;
