//! Table-driven reference backend.
//!
//! Probabilities come from a TSV mapping (context pattern, token) to a
//! value, with the remaining mass spread uniformly over unlisted
//! vocabulary entries. Embeddings are one-hot by token id unless an
//! explicit embeddings table is supplied. Every pipeline behavior is
//! testable against this backend without model weights.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::backend::{
    top_n_of, BundleManifest, MaskedQuery, MlmBackend, TokenDistribution, TokenId,
    PROBABILITY_FLOOR,
};
use crate::error::BackendError;
use crate::tokenizer::SubwordVocabulary;
use crate::{Embedding, Scalar};

/// One table row: the token strings around the mask slot plus the asserted
/// probability. An empty context (`_` alone) matches any query.
#[derive(Debug, Clone, PartialEq)]
struct TableRow {
    before: Vec<String>,
    after: Vec<String>,
    token: TokenId,
    probability: Scalar,
}

pub struct ReferenceBackend {
    vocab: SubwordVocabulary,
    rows: Vec<TableRow>,
    embeddings: Option<HashMap<TokenId, Vec<Scalar>>>,
    embedding_dim: usize,
    max_context_len: usize,
    variant: String,
}

impl ReferenceBackend {
    pub fn load(
        manifest: &BundleManifest,
        vocab: SubwordVocabulary,
        table_path: &Path,
        embeddings_path: Option<&Path>,
    ) -> Result<Self, BackendError> {
        let table = fs::read_to_string(table_path)
            .map_err(|e| BackendError::Bundle(format!("{}: {e}", table_path.display())))?;
        let rows = parse_table(&table, &vocab)?;
        let embeddings = embeddings_path
            .map(|p| {
                let data = fs::read_to_string(p)
                    .map_err(|e| BackendError::Bundle(format!("{}: {e}", p.display())))?;
                parse_embeddings(&data, &vocab, manifest.embedding_dim)
            })
            .transpose()?;
        Ok(Self {
            vocab,
            rows,
            embeddings,
            embedding_dim: manifest.embedding_dim,
            max_context_len: manifest.max_context_len,
            variant: manifest.variant.clone(),
        })
    }

    /// In-memory construction for tests and synthetic fixtures.
    pub fn from_parts(
        vocab: SubwordVocabulary,
        table: &str,
        embeddings: Option<&str>,
        embedding_dim: usize,
        max_context_len: usize,
    ) -> Result<Self, BackendError> {
        let rows = parse_table(table, &vocab)?;
        let embeddings = embeddings
            .map(|data| parse_embeddings(data, &vocab, embedding_dim))
            .transpose()?;
        Ok(Self {
            vocab,
            rows,
            embeddings,
            embedding_dim,
            max_context_len,
            variant: "reference".into(),
        })
    }

    /// Full probability vector over the vocabulary for one query.
    ///
    /// Rows whose context matches contribute their values; when several
    /// matching rows name the same token, the most specific context wins.
    /// Special tokens sit at the floor; the remaining mass is uniform over
    /// unlisted regular tokens.
    fn probabilities(&self, query: &MaskedQuery) -> Vec<Scalar> {
        let strings: Vec<&str> = query
            .tokens()
            .iter()
            .map(|&id| self.vocab.entry(id).unwrap_or(""))
            .collect();
        let target = query.target_position();

        // (specificity, token, prob) for matching rows
        let mut explicit: HashMap<TokenId, (usize, Scalar)> = HashMap::new();
        for row in &self.rows {
            if !context_matches(&strings, target, &row.before, &row.after) {
                continue;
            }
            let specificity = row.before.len() + row.after.len();
            let slot = explicit.entry(row.token).or_insert((specificity, row.probability));
            if specificity >= slot.0 {
                *slot = (specificity, row.probability);
            }
        }

        let vocab_len = self.vocab.len();
        let mut probs = vec![0.0; vocab_len];
        let mut assigned = 0.0;
        let mut unlisted = 0usize;
        for id in 0..vocab_len as TokenId {
            if let Some(&(_, p)) = explicit.get(&id) {
                probs[id as usize] = p.max(PROBABILITY_FLOOR);
                assigned += probs[id as usize];
            } else if self.vocab.is_special(id) {
                probs[id as usize] = PROBABILITY_FLOOR;
                assigned += PROBABILITY_FLOOR;
            } else {
                unlisted += 1;
            }
        }
        let remaining = (1.0 - assigned).max(0.0);
        let uniform = if unlisted > 0 {
            (remaining / unlisted as Scalar).max(PROBABILITY_FLOOR)
        } else {
            0.0
        };
        for id in 0..vocab_len as TokenId {
            if probs[id as usize] == 0.0 {
                probs[id as usize] = uniform;
            }
        }
        probs
    }
}

fn context_matches(tokens: &[&str], target: usize, before: &[String], after: &[String]) -> bool {
    if before.len() > target || target + 1 + after.len() > tokens.len() {
        return false;
    }
    let pre = &tokens[target - before.len()..target];
    if pre.iter().zip(before).any(|(a, b)| *a != b) {
        return false;
    }
    let post = &tokens[target + 1..target + 1 + after.len()];
    post.iter().zip(after).all(|(a, b)| *a == b)
}

fn parse_table(data: &str, vocab: &SubwordVocabulary) -> Result<Vec<TableRow>, BackendError> {
    let mut rows = Vec::new();
    for (lineno, line) in data.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (pattern, token, prob) = match (cols.next(), cols.next(), cols.next()) {
            (Some(p), Some(t), Some(v)) => (p, t, v),
            _ => {
                return Err(BackendError::Bundle(format!(
                    "table line {}: expected 3 tab-separated columns",
                    lineno + 1
                )))
            }
        };
        let parts: Vec<&str> = pattern.split_whitespace().collect();
        let slot = parts.iter().position(|p| *p == "_").ok_or_else(|| {
            BackendError::Bundle(format!("table line {}: pattern lacks `_` slot", lineno + 1))
        })?;
        let token_id = vocab.lookup(token).ok_or_else(|| {
            BackendError::Bundle(format!(
                "table line {}: token {token:?} not in vocabulary",
                lineno + 1
            ))
        })?;
        let probability: Scalar = prob.parse().map_err(|_| {
            BackendError::Bundle(format!("table line {}: bad probability {prob:?}", lineno + 1))
        })?;
        if !(probability > 0.0 && probability <= 1.0) {
            return Err(BackendError::Bundle(format!(
                "table line {}: probability must lie in (0, 1]",
                lineno + 1
            )));
        }
        rows.push(TableRow {
            before: parts[..slot].iter().map(|s| s.to_string()).collect(),
            after: parts[slot + 1..].iter().map(|s| s.to_string()).collect(),
            token: token_id,
            probability,
        });
    }
    Ok(rows)
}

fn parse_embeddings(
    data: &str,
    vocab: &SubwordVocabulary,
    dim: usize,
) -> Result<HashMap<TokenId, Vec<Scalar>>, BackendError> {
    let mut map = HashMap::new();
    for (lineno, line) in data.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (token, rest) = line.split_once('\t').ok_or_else(|| {
            BackendError::Bundle(format!("embeddings line {}: expected token TAB values", lineno + 1))
        })?;
        let id = vocab.lookup(token).ok_or_else(|| {
            BackendError::Bundle(format!(
                "embeddings line {}: token {token:?} not in vocabulary",
                lineno + 1
            ))
        })?;
        let components = rest
            .split_whitespace()
            .map(|v| v.parse::<Scalar>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| {
                BackendError::Bundle(format!("embeddings line {}: {e}", lineno + 1))
            })?;
        if components.len() != dim {
            return Err(BackendError::Bundle(format!(
                "embeddings line {}: expected {dim} components, got {}",
                lineno + 1,
                components.len()
            )));
        }
        map.insert(id, components);
    }
    Ok(map)
}

impl MlmBackend for ReferenceBackend {
    fn vocab(&self) -> &SubwordVocabulary {
        &self.vocab
    }

    fn max_context_len(&self) -> usize {
        self.max_context_len
    }

    fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    fn identity(&self) -> String {
        format!("reference:{}", self.variant)
    }

    fn masked_distribution(
        &self,
        query: &MaskedQuery,
        top_n: usize,
        include: Option<TokenId>,
    ) -> Result<TokenDistribution, BackendError> {
        self.check_context_len(query)?;
        if let Some(id) = include {
            if self.vocab.entry(id).is_none() {
                return Err(BackendError::InvalidTokenId(id, self.vocab.len()));
            }
        }
        let probs = self.probabilities(query);
        Ok(top_n_of(&probs, top_n, include))
    }

    fn embed(&self, token: TokenId) -> Result<Embedding, BackendError> {
        if self.vocab.entry(token).is_none() {
            return Err(BackendError::InvalidTokenId(token, self.vocab.len()));
        }
        if let Some(table) = &self.embeddings {
            if let Some(components) = table.get(&token) {
                return Ok(Embedding::new(components.clone())?);
            }
        }
        // one-hot fallback by token id
        let mut components = vec![0.0; self.embedding_dim];
        components[token as usize % self.embedding_dim] = 1.0;
        Ok(Embedding::new(components)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cosine_distance;
    use crate::tokenizer::test_vocab;
    use approx::assert_relative_eq;

    fn uniform_backend() -> ReferenceBackend {
        let vocab = SubwordVocabulary::from_lines(
            ["[UNK]", "[MASK]", "[SEP]", "a", "b", "c", "d"]
                .iter()
                .map(|s| s.to_string()),
            "##",
            "[UNK]",
            "[MASK]",
            "[SEP]",
        )
        .unwrap();
        ReferenceBackend::from_parts(vocab, "", None, 7, 64).unwrap()
    }

    fn query(backend: &ReferenceBackend, tokens: &[&str], target: usize) -> MaskedQuery {
        let ids = tokens
            .iter()
            .map(|t| backend.vocab.lookup(t).unwrap())
            .collect();
        MaskedQuery::new(ids, target, backend.vocab.mask_id()).unwrap()
    }

    #[test]
    fn uniform_table_gives_quarter_each() {
        let b = uniform_backend();
        let q = query(&b, &["a", "[MASK]"], 1);
        let dist = b.masked_distribution(&q, 4, None).unwrap();
        for &(id, p) in dist.entries() {
            assert!(!b.vocab.is_special(id));
            assert_relative_eq!(p, 0.25, epsilon = 1e-6);
        }
    }

    #[test]
    fn distribution_sums_to_one() {
        let b = uniform_backend();
        let q = query(&b, &["[MASK]", "b"], 0);
        let dist = b.masked_distribution(&q, b.vocab.len(), None).unwrap();
        let sum: f64 = dist.entries().iter().map(|(_, p)| p).sum();
        assert_relative_eq!(sum, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn top_n_prefix_property() {
        let b = uniform_backend();
        let q = query(&b, &["a", "[MASK]", "c"], 1);
        let one = b.masked_distribution(&q, 1, None).unwrap();
        let fifty = b.masked_distribution(&q, 50, None).unwrap();
        assert_eq!(one.entries(), &fifty.entries()[..1]);
    }

    #[test]
    fn mask_token_probability_is_floored() {
        let b = uniform_backend();
        let q = query(&b, &["a", "[MASK]"], 1);
        let p = b.token_probability(&q, b.vocab.mask_id()).unwrap();
        assert_relative_eq!(p, PROBABILITY_FLOOR);
    }

    #[test]
    fn names_fixture_matches_worked_example() {
        let vocab = test_vocab::build();
        let dim = vocab.len();
        let table = "# worked example\nmy name is _\tjohn\t0.004\n";
        let b = ReferenceBackend::from_parts(vocab, table, None, dim, 64).unwrap();
        let q = query(&b, &["my", "name", "is", "[MASK]", "."], 3);
        let john = b.vocab.lookup("john").unwrap();
        let dist = b.masked_distribution(&q, 5, Some(john)).unwrap();
        assert_relative_eq!(dist.probability_of(john).unwrap_or(0.0), 0.004, epsilon = 1e-12);
        assert_relative_eq!(b.token_probability(&q, john).unwrap(), 0.004, epsilon = 1e-12);
    }

    #[test]
    fn malformed_table_rejected() {
        let vocab = test_vocab::build();
        for bad in ["_ my\t0.03\n", "my name is\tjohn\t0.004\n", "_\tjohn\t1.5\n"] {
            assert!(ReferenceBackend::from_parts(vocab.clone(), bad, None, 4, 64).is_err());
        }
    }

    #[test]
    fn most_specific_context_wins() {
        let vocab = test_vocab::build();
        let table = "_\tjohn\t0.5\nmy name is _\tjohn\t0.004\n";
        let b = ReferenceBackend::from_parts(vocab, table, None, 4, 64).unwrap();
        let specific = query(&b, &["my", "name", "is", "[MASK]"], 3);
        let generic = query(&b, &["the", "[MASK]"], 1);
        let john = b.vocab.lookup("john").unwrap();
        assert_relative_eq!(b.token_probability(&specific, john).unwrap(), 0.004);
        assert_relative_eq!(b.token_probability(&generic, john).unwrap(), 0.5);
    }

    #[test]
    fn one_hot_embeddings() {
        let b = uniform_backend();
        let a = b.embed(3).unwrap();
        let c = b.embed(5).unwrap();
        assert_relative_eq!(cosine_distance(&a, &a.clone()).unwrap(), 0.0);
        assert_relative_eq!(cosine_distance(&a, &c).unwrap(), 1.0);
    }

    #[test]
    fn explicit_embeddings_table() {
        let vocab = test_vocab::build();
        let emb = "john\t1 0\ndavid\t-1 0\n";
        let b = ReferenceBackend::from_parts(vocab, "", Some(emb), 2, 64).unwrap();
        let john = b.embed(b.vocab.lookup("john").unwrap()).unwrap();
        let david = b.embed(b.vocab.lookup("david").unwrap()).unwrap();
        assert_relative_eq!(cosine_distance(&john, &david).unwrap(), 2.0);
    }

    #[test]
    fn context_too_long_rejected() {
        let b = uniform_backend();
        let mut tokens = vec!["a"; 70];
        tokens[0] = "[MASK]";
        let q = query(&b, &tokens, 0);
        assert!(matches!(
            b.masked_distribution(&q, 1, None),
            Err(BackendError::ContextTooLong { .. })
        ));
    }
}
