//! Replacement generation for flagged words.
//!
//! Non-numeric words draw an embedding-similar candidate from the masked
//! distribution; numeric words get fresh random digits of the same shape.
//! A per-document bidirectional table keeps replacement consistent and
//! reversible.

use std::collections::BTreeMap;

use rand::Rng;
use regex::{Captures, Regex, RegexBuilder};
use serde_json::Value;

use crate::backend::{MlmBackend, TokenDistribution, TokenId};
use crate::error::{BackendError, TableError};
use crate::rng::SanitizeRng;
use crate::scalar::cosine_distance;
use crate::tokenizer::{restore_case, REMOVED_SENTINEL};
use crate::{Embedding, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SubstitutionParams {
    /// Candidate-pool size drawn from the masked distribution.
    pub n: usize,
    /// Shortlist size among the most similar candidates.
    pub k: usize,
    /// Cosine-distance radius; candidates farther than this are dropped.
    pub s: Scalar,
    pub seed: u64,
}

impl SubstitutionParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 || self.k == 0 || self.k > self.n {
            return Err(format!("need 1 <= k <= n, got n={} k={}", self.n, self.k));
        }
        if !(0.0..=2.0).contains(&self.s) {
            return Err(format!("radius s must lie in [0, 2], got {}", self.s));
        }
        Ok(())
    }
}

impl Default for SubstitutionParams {
    /// n = 50, s = 2, k = 1.
    fn default() -> Self {
        Self {
            n: 50,
            k: 1,
            s: 2.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubstitutionAction {
    Substituted {
        replacement: String,
        /// Cosine distance of the chosen candidate; always <= s.
        distance: Option<Scalar>,
    },
    Removed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubstitutionOutcome {
    pub word_index: usize,
    pub action: SubstitutionAction,
    pub candidates_considered: usize,
}

/// Bidirectional original <-> replacement map over lowercase surfaces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubstitutionTable {
    forward: BTreeMap<String, String>,
    reverse: BTreeMap<String, String>,
}

impl SubstitutionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lookup(&self, original_lower: &str) -> Option<&str> {
        self.forward.get(original_lower).map(String::as_str)
    }

    pub fn is_replacement(&self, surface_lower: &str) -> bool {
        self.reverse.contains_key(surface_lower)
    }

    pub fn insert(&mut self, original_lower: &str, replacement: &str) -> Result<(), TableError> {
        if original_lower == replacement {
            return Err(TableError::Identity(original_lower.to_string()));
        }
        if original_lower == REMOVED_SENTINEL || replacement == REMOVED_SENTINEL {
            return Err(TableError::Sentinel);
        }
        if let Some(existing) = self.reverse.get(replacement) {
            if existing != original_lower {
                return Err(TableError::Collision {
                    replacement: replacement.to_string(),
                    existing: existing.clone(),
                });
            }
        }
        self.forward
            .insert(original_lower.to_string(), replacement.to_string());
        self.reverse
            .insert(replacement.to_string(), original_lower.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.forward.iter().map(|(o, r)| (o.as_str(), r.as_str()))
    }

    /// JSON object {original: replacement}; the reverse map is derived.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.forward).expect("string map serializes")
    }

    pub fn from_json(data: &str) -> Result<Self, TableError> {
        let value: Value =
            serde_json::from_str(data).map_err(|e| TableError::Malformed(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| TableError::Malformed("expected a JSON object".into()))?;
        let mut table = Self::new();
        for (original, replacement) in obj {
            let replacement = replacement
                .as_str()
                .ok_or_else(|| TableError::Malformed(format!("non-string value for {original:?}")))?;
            table.insert(original, replacement)?;
        }
        Ok(table)
    }
}

/// Mean static embedding of a word's subword tokens.
pub fn word_embedding(
    token_ids: &[TokenId],
    backend: &dyn MlmBackend,
) -> Result<Embedding, BackendError> {
    let vectors = token_ids
        .iter()
        .map(|&id| backend.embed(id))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Embedding::mean(&vectors)?)
}

/// A candidate after the similarity sort.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub token_id: TokenId,
    pub surface: String,
    pub distance: Scalar,
    pub probability: Scalar,
}

/// Sorted, radius-filtered candidate list for one flagged word.
///
/// Takes the top n entries, drops special/continuation entries and the
/// original word's own tokens, sorts ascending by cosine distance to the
/// word embedding (ties: descending probability, then ascending id), and
/// keeps candidates within radius s.
pub fn candidate_shortlist(
    word_surface_lower: &str,
    word_token_ids: &[TokenId],
    distribution: &TokenDistribution,
    backend: &dyn MlmBackend,
    params: &SubstitutionParams,
) -> Result<Vec<Candidate>, BackendError> {
    let vocab = backend.vocab();
    let target = word_embedding(word_token_ids, backend)?;
    let mut candidates = Vec::new();
    for &(id, probability) in distribution.entries().iter().take(params.n) {
        if vocab.is_special(id) || vocab.is_continuation_entry(id) {
            continue;
        }
        if word_token_ids.contains(&id) {
            continue;
        }
        let surface = match vocab.entry(id) {
            Some(e) => e.to_string(),
            None => continue,
        };
        if surface == word_surface_lower {
            continue;
        }
        let distance = match cosine_distance(&backend.embed(id)?, &target) {
            Ok(d) => d,
            Err(_) => continue, // zero-norm embedding rows cannot be ranked
        };
        candidates.push(Candidate {
            token_id: id,
            surface,
            distance,
            probability,
        });
    }
    candidates.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .expect("distances are finite")
            .then(
                b.probability
                    .partial_cmp(&a.probability)
                    .expect("probabilities are finite"),
            )
            .then(a.token_id.cmp(&b.token_id))
    });
    candidates.retain(|c| c.distance <= params.s);
    Ok(candidates)
}

/// Pick a replacement for a flagged non-numeric word.
///
/// Fewer than k candidates within the radius means removal. `excluded`
/// holds replacement surfaces already claimed by other originals; a
/// colliding pick is discarded and redrawn from the rest of the
/// shortlist, falling back to removal when it empties.
#[allow(clippy::too_many_arguments)]
pub fn propose_substitution(
    word_index: usize,
    word_surface_lower: &str,
    word_token_ids: &[TokenId],
    distribution: &TokenDistribution,
    backend: &dyn MlmBackend,
    params: &SubstitutionParams,
    excluded: &dyn Fn(&str) -> bool,
    rng: &mut SanitizeRng,
) -> Result<SubstitutionOutcome, BackendError> {
    let candidates = candidate_shortlist(
        word_surface_lower,
        word_token_ids,
        distribution,
        backend,
        params,
    )?;
    let considered = candidates.len();
    if candidates.len() < params.k {
        return Ok(SubstitutionOutcome {
            word_index,
            action: SubstitutionAction::Removed,
            candidates_considered: considered,
        });
    }
    let mut shortlist: Vec<&Candidate> = candidates.iter().take(params.k).collect();
    while !shortlist.is_empty() {
        let pick = rng.gen_range(0..shortlist.len());
        let candidate = shortlist[pick];
        if excluded(&candidate.surface) {
            shortlist.remove(pick);
            continue;
        }
        return Ok(SubstitutionOutcome {
            word_index,
            action: SubstitutionAction::Substituted {
                replacement: candidate.surface.clone(),
                distance: Some(candidate.distance),
            },
            candidates_considered: considered,
        });
    }
    Ok(SubstitutionOutcome {
        word_index,
        action: SubstitutionAction::Removed,
        candidates_considered: considered,
    })
}

/// Same-shape random digits for a flagged numeric word.
///
/// Separator characters stay in place; redraws until the result differs
/// from the original and from any replacement already claimed elsewhere.
pub fn substitute_numeric(
    word_index: usize,
    surface: &str,
    excluded: &dyn Fn(&str) -> bool,
    rng: &mut SanitizeRng,
) -> SubstitutionOutcome {
    let lower = surface.to_lowercase();
    for _ in 0..1000 {
        let replacement: String = lower
            .chars()
            .map(|c| {
                if c.is_ascii_digit() {
                    char::from(b'0' + rng.gen_range(0..10u8))
                } else {
                    c
                }
            })
            .collect();
        if replacement != lower && !excluded(&replacement) {
            return SubstitutionOutcome {
                word_index,
                action: SubstitutionAction::Substituted {
                    replacement,
                    distance: None,
                },
                candidates_considered: 0,
            };
        }
    }
    // all digit patterns taken (only possible for tiny digit counts)
    SubstitutionOutcome {
        word_index,
        action: SubstitutionAction::Removed,
        candidates_considered: 0,
    }
}

/// Rewrite whole-word occurrences of replacements back to their
/// originals, longest replacement first, preserving surface casing.
pub fn reverse_apply(sanitized_text: &str, table: &SubstitutionTable) -> String {
    if table.is_empty() {
        return sanitized_text.to_string();
    }
    let mut keys: Vec<&str> = table.reverse.keys().map(String::as_str).collect();
    keys.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    let pattern = format!(
        r"\b(?:{})\b",
        keys.iter()
            .map(|k| regex::escape(k))
            .collect::<Vec<_>>()
            .join("|")
    );
    let re = RegexBuilder::new(&pattern)
        .case_insensitive(true)
        .build()
        .expect("escaped alternation is valid");
    re.replace_all(sanitized_text, |caps: &Captures| {
        let matched = caps.get(0).unwrap().as_str();
        let original = &table.reverse[&matched.to_lowercase()];
        restore_case(matched, original)
    })
    .into_owned()
}

/// Whole-word matcher used when checking whether a surface is a known
/// replacement (shared with tests).
pub fn word_boundary_regex(word: &str) -> Regex {
    RegexBuilder::new(&format!(r"\b{}\b", regex::escape(word)))
        .case_insensitive(true)
        .build()
        .expect("escaped word is valid")
}
