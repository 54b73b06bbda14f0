//! Word-probability estimation by iterative masking, and threshold
//! filtering of the results.
//!
//! A word of m subword tokens is probed in m steps: step i reveals the
//! first i-1 true tokens, masks the rest, and asks the backend for the
//! probability of token i. The word probability is the product of the
//! step values.

use std::collections::HashSet;

use crate::backend::{MaskedQuery, MlmBackend, TokenDistribution, TokenId};
use crate::error::FilterError;
use crate::scalar::information_content;
use crate::tokenizer::{TokenizedText, WordKind};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct WordProbability {
    pub word_index: usize,
    pub probability: Scalar,
    pub per_token: Vec<Scalar>,
    pub ic_nats: Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedactionDecision {
    pub word_index: usize,
    pub probability: Scalar,
    pub flagged: bool,
    pub threshold_used: Scalar,
}

/// The masking chain for one word: one query per subword token, paired
/// with the true token whose probability that step requests.
///
/// `prefix` holds conditioning tokens (previous sanitized utterance plus
/// separator); it is left-truncated to fit the backend's context window,
/// and the current utterance is left-truncated after that if it still
/// does not fit, always keeping the masked word itself.
pub fn masking_chain(
    prefix: &[TokenId],
    text: &TokenizedText,
    word_index: usize,
    backend: &dyn MlmBackend,
) -> Result<Vec<(MaskedQuery, TokenId)>, FilterError> {
    let word = &text.words[word_index];
    if word.kind == WordKind::Punctuation {
        return Err(FilterError::PunctuationWord(word_index));
    }
    let mask_id = backend.vocab().mask_id();
    let max_len = backend.max_context_len();
    let utterance: Vec<TokenId> = text.tokens.iter().map(|t| t.id).collect();
    let word_range = word.token_indices.clone();

    let total = prefix.len() + utterance.len();
    let overflow = total.saturating_sub(max_len);
    let prefix_drop = overflow.min(prefix.len());
    let utterance_drop = (overflow - prefix_drop).min(word_range.start);
    let prefix = &prefix[prefix_drop..];
    let base = word_range.start - utterance_drop;

    let m = word_range.len();
    let mut chain = Vec::with_capacity(m);
    for step in 0..m {
        let mut tokens: Vec<TokenId> = prefix
            .iter()
            .copied()
            .chain(utterance[utterance_drop..].iter().copied())
            .collect();
        // mask positions step..m of the word
        for j in step..m {
            tokens[prefix.len() + base + j] = mask_id;
        }
        let target = prefix.len() + base + step;
        let true_token = utterance[word_range.start + step];
        let query = MaskedQuery::new(tokens, target, mask_id)
            .expect("target position was just masked");
        chain.push((query, true_token));
    }
    Ok(chain)
}

/// Probability of the word at `word_index`, conditioned on `prefix`.
pub fn word_probability(
    prefix: &[TokenId],
    text: &TokenizedText,
    word_index: usize,
    backend: &dyn MlmBackend,
) -> Result<WordProbability, FilterError> {
    let chain = masking_chain(prefix, text, word_index, backend)?;
    let mut per_token = Vec::with_capacity(chain.len());
    for (query, token) in &chain {
        per_token.push(backend.token_probability(query, *token)?);
    }
    Ok(assemble(word_index, per_token))
}

/// As [`word_probability`], but the first chain step additionally returns
/// the top-n distribution, so probability estimation and candidate
/// generation share one backend invocation.
pub fn word_probability_with_distribution(
    prefix: &[TokenId],
    text: &TokenizedText,
    word_index: usize,
    backend: &dyn MlmBackend,
    top_n: usize,
) -> Result<(WordProbability, TokenDistribution), FilterError> {
    let chain = masking_chain(prefix, text, word_index, backend)?;
    let mut per_token = Vec::with_capacity(chain.len());
    let (first_query, first_token) = &chain[0];
    let dist = backend.masked_distribution(first_query, top_n, Some(*first_token))?;
    per_token.push(dist.requested().expect("include was set").1);
    for (query, token) in &chain[1..] {
        per_token.push(backend.token_probability(query, *token)?);
    }
    Ok((assemble(word_index, per_token), dist))
}

fn assemble(word_index: usize, per_token: Vec<Scalar>) -> WordProbability {
    let probability: Scalar = per_token.iter().product();
    let ic_nats = information_content(probability).unwrap_or(Scalar::INFINITY);
    WordProbability {
        word_index,
        probability,
        per_token,
        ic_nats,
    }
}

/// Flag every word whose probability falls strictly below `p`.
///
/// `probabilities` must cover each non-punctuation word exactly once;
/// punctuation words receive no decision.
pub fn p_filter(
    text: &TokenizedText,
    probabilities: &[WordProbability],
    p: Scalar,
) -> Result<Vec<RedactionDecision>, FilterError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(FilterError::BadThreshold);
    }
    let covered: HashSet<usize> = probabilities.iter().map(|wp| wp.word_index).collect();
    if covered.len() != probabilities.len() {
        return Err(FilterError::MissingProbability(0));
    }
    for (i, word) in text.words.iter().enumerate() {
        if word.kind != WordKind::Punctuation && !covered.contains(&i) {
            return Err(FilterError::MissingProbability(i));
        }
    }
    Ok(probabilities
        .iter()
        .map(|wp| RedactionDecision {
            word_index: wp.word_index,
            probability: wp.probability,
            flagged: wp.probability < p,
            threshold_used: p,
        })
        .collect())
}
