//! Masked-language-model backend abstraction.
//!
//! Two implementations live behind [`MlmBackend`]: a table-driven
//! [`reference`] backend used as a deterministic oracle in tests and
//! fixtures, and a [`transformer`] adapter that runs a local BERT-style
//! encoder loaded from a model bundle directory.

mod bundle;
pub mod reference;
pub mod transformer;

pub use bundle::{load_backend, BundleManifest};
pub use reference::ReferenceBackend;
pub use transformer::TransformerBackend;

use crate::error::BackendError;
use crate::tokenizer::SubwordVocabulary;
use crate::{Embedding, Scalar};

pub type TokenId = u32;

/// Probability floor applied by every backend; keeps logs finite and
/// multi-token products nonzero.
pub const PROBABILITY_FLOOR: Scalar = 1e-12;

/// A token sequence with one masked position singled out for prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedQuery {
    tokens: Vec<TokenId>,
    target_position: usize,
}

impl MaskedQuery {
    /// Validates that the target position actually holds the mask token.
    pub fn new(
        tokens: Vec<TokenId>,
        target_position: usize,
        mask_id: TokenId,
    ) -> Result<Self, BackendError> {
        if tokens.get(target_position).copied() != Some(mask_id) {
            return Err(BackendError::TargetNotMasked(target_position));
        }
        Ok(Self {
            tokens,
            target_position,
        })
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn target_position(&self) -> usize {
        self.target_position
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Top-scoring vocabulary entries at a masked position, sorted by
/// descending probability (ties: ascending token id).
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    entries: Vec<(TokenId, Scalar)>,
    /// Exact probability of an explicitly requested token, independent of
    /// the top-n truncation.
    requested: Option<(TokenId, Scalar)>,
}

impl TokenDistribution {
    pub fn new(entries: Vec<(TokenId, Scalar)>, requested: Option<(TokenId, Scalar)>) -> Self {
        Self { entries, requested }
    }

    pub fn entries(&self) -> &[(TokenId, Scalar)] {
        &self.entries
    }

    pub fn truncation(&self) -> usize {
        self.entries.len()
    }

    pub fn requested(&self) -> Option<(TokenId, Scalar)> {
        self.requested
    }

    pub fn probability_of(&self, token: TokenId) -> Option<Scalar> {
        if let Some((t, p)) = self.requested {
            if t == token {
                return Some(p);
            }
        }
        self.entries
            .iter()
            .find(|(t, _)| *t == token)
            .map(|(_, p)| *p)
    }
}

/// Sort a full probability vector into top-n entries with the canonical
/// tie rule, and capture the exact probability of `include` if asked.
pub(crate) fn top_n_of(
    probs: &[Scalar],
    top_n: usize,
    include: Option<TokenId>,
) -> TokenDistribution {
    let mut ids: Vec<TokenId> = (0..probs.len() as TokenId).collect();
    ids.sort_by(|&a, &b| {
        probs[b as usize]
            .partial_cmp(&probs[a as usize])
            .expect("probabilities are finite")
            .then(a.cmp(&b))
    });
    let entries = ids
        .into_iter()
        .take(top_n)
        .map(|id| (id, probs[id as usize]))
        .collect();
    let requested = include.map(|id| (id, probs[id as usize]));
    TokenDistribution::new(entries, requested)
}

/// Masked-token probability estimation plus static token embeddings.
///
/// Implementations are read-only after construction and shareable across
/// threads.
pub trait MlmBackend: Send + Sync {
    /// The subword vocabulary the backend was built with; the tokenizer
    /// must use the same one.
    fn vocab(&self) -> &SubwordVocabulary;

    fn max_context_len(&self) -> usize;

    fn embedding_dim(&self) -> usize;

    /// Human-readable model identity for reports and `--version`.
    fn identity(&self) -> String;

    /// Top `top_n` vocabulary entries at the masked position. When
    /// `include` is given, the exact (untruncated) probability of that
    /// token rides along, so probability lookup and candidate generation
    /// can share one invocation.
    fn masked_distribution(
        &self,
        query: &MaskedQuery,
        top_n: usize,
        include: Option<TokenId>,
    ) -> Result<TokenDistribution, BackendError>;

    /// Exact model probability of `token` at the masked position.
    fn token_probability(&self, query: &MaskedQuery, token: TokenId) -> Result<Scalar, BackendError> {
        let dist = self.masked_distribution(query, 0, Some(token))?;
        Ok(dist.requested().expect("include was set").1)
    }

    /// Static input-embedding row for a token.
    fn embed(&self, token: TokenId) -> Result<Embedding, BackendError>;

    fn check_context_len(&self, query: &MaskedQuery) -> Result<(), BackendError> {
        if query.len() > self.max_context_len() {
            return Err(BackendError::ContextTooLong {
                len: query.len(),
                max: self.max_context_len(),
            });
        }
        Ok(())
    }
}

/// Wrapper that counts backend invocations; used to verify the
/// separate-vs-simultaneous cost contract.
pub struct CountingBackend<B> {
    inner: B,
    distribution_calls: std::sync::atomic::AtomicUsize,
    probability_calls: std::sync::atomic::AtomicUsize,
}

impl<B: MlmBackend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            distribution_calls: Default::default(),
            probability_calls: Default::default(),
        }
    }

    pub fn distribution_calls(&self) -> usize {
        self.distribution_calls.load(std::sync::atomic::Ordering::Relaxed)
    }

    pub fn probability_calls(&self) -> usize {
        self.probability_calls.load(std::sync::atomic::Ordering::Relaxed)
    }

    pub fn total_calls(&self) -> usize {
        self.distribution_calls() + self.probability_calls()
    }

    pub fn reset(&self) {
        self.distribution_calls.store(0, std::sync::atomic::Ordering::Relaxed);
        self.probability_calls.store(0, std::sync::atomic::Ordering::Relaxed);
    }
}

impl<B: MlmBackend> MlmBackend for CountingBackend<B> {
    fn vocab(&self) -> &SubwordVocabulary {
        self.inner.vocab()
    }
    fn max_context_len(&self) -> usize {
        self.inner.max_context_len()
    }
    fn embedding_dim(&self) -> usize {
        self.inner.embedding_dim()
    }
    fn identity(&self) -> String {
        self.inner.identity()
    }
    fn masked_distribution(
        &self,
        query: &MaskedQuery,
        top_n: usize,
        include: Option<TokenId>,
    ) -> Result<TokenDistribution, BackendError> {
        self.distribution_calls
            .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        self.inner.masked_distribution(query, top_n, include)
    }
    fn token_probability(&self, query: &MaskedQuery, token: TokenId) -> Result<Scalar, BackendError> {
        self.probability_calls
            .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        self.inner.token_probability(query, token)
    }
    fn embed(&self, token: TokenId) -> Result<Embedding, BackendError> {
        self.inner.embed(token)
    }
}

impl<T: MlmBackend + ?Sized> MlmBackend for &T {
    fn vocab(&self) -> &SubwordVocabulary {
        (**self).vocab()
    }
    fn max_context_len(&self) -> usize {
        (**self).max_context_len()
    }
    fn embedding_dim(&self) -> usize {
        (**self).embedding_dim()
    }
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn masked_distribution(
        &self,
        query: &MaskedQuery,
        top_n: usize,
        include: Option<TokenId>,
    ) -> Result<TokenDistribution, BackendError> {
        (**self).masked_distribution(query, top_n, include)
    }
    fn token_probability(&self, query: &MaskedQuery, token: TokenId) -> Result<Scalar, BackendError> {
        (**self).token_probability(query, token)
    }
    fn embed(&self, token: TokenId) -> Result<Embedding, BackendError> {
        (**self).embed(token)
    }
}
