//! Zero-shot text sanitization.
//!
//! Estimates per-word probabilities with a pluggable masked-language-model
//! backend, redacts words below a privacy threshold, substitutes them with
//! embedding-similar alternatives through a reversible substitution table,
//! and scores redaction quality against annotated dialogue corpora.

pub mod backend;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod pfilter;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod substitution;
pub mod tokenizer;

/// Scalar type the pipeline runs at; the kernels in [`scalar`] stay
/// generic over the float width.
pub type Scalar = f64;

/// Embedding vector at the pipeline scalar type.
pub type Embedding = scalar::EmbeddingVector<Scalar>;

pub use backend::{load_backend, MlmBackend};
pub use pipeline::{SanitizeConfig, Utterance};
pub use substitution::{SubstitutionParams, SubstitutionTable};
pub use tokenizer::{tokenize, SubwordVocabulary, TokenizedText};
