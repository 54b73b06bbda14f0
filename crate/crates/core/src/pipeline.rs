//! Utterance- and dialogue-level orchestration.
//!
//! Utterances are processed in turn order; the preceding sanitized
//! utterance conditions the next one's probabilities, so sensitive terms
//! never leak through the context channel.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backend::{MlmBackend, TokenId};
use crate::error::{FilterError, PipelineError};
use crate::pfilter::{self, WordProbability};
use crate::rng::SanitizeRng;
use crate::substitution::{
    propose_substitution, substitute_numeric, SubstitutionAction, SubstitutionParams,
    SubstitutionTable,
};
use crate::tokenizer::{detokenize, tokenize, TokenizedText, WordKind, REMOVED_SENTINEL};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    RedactOnly,
    RedactAndSubstitute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Invocation {
    Separate,
    Simultaneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableScope {
    PerConversation,
    Corpus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SanitizeConfig {
    pub threshold_p: Scalar,
    pub params: SubstitutionParams,
    pub mode: Mode,
    pub invocation: Invocation,
    pub use_context: bool,
    /// How many preceding sanitized utterances condition the current one.
    pub context_depth: usize,
    pub table_scope: TableScope,
}

impl Default for SanitizeConfig {
    fn default() -> Self {
        Self {
            threshold_p: 0.01,
            params: SubstitutionParams::default(),
            mode: Mode::RedactAndSubstitute,
            invocation: Invocation::Separate,
            use_context: true,
            context_depth: 1,
            table_scope: TableScope::PerConversation,
        }
    }
}

impl SanitizeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.threshold_p > 0.0 && self.threshold_p <= 1.0) {
            return Err(format!(
                "threshold must lie in (0, 1], got {}",
                self.threshold_p
            ));
        }
        self.params.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: String,
    pub text: String,
    pub turn_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionAction {
    Kept,
    Substituted,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub turn_index: usize,
    pub word_index: usize,
    pub surface: String,
    pub probability: Scalar,
    pub ic_nats: Scalar,
    pub action: DecisionAction,
    pub replacement: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SanitizedUtterance {
    pub original: Utterance,
    pub sanitized_text: String,
    pub decisions: Vec<DecisionRecord>,
}

/// Probabilities (and, in simultaneous mode, first-step distributions)
/// for every non-punctuation word of one utterance.
fn probe_words(
    prefix: &[TokenId],
    text: &TokenizedText,
    config: &SanitizeConfig,
    backend: &dyn MlmBackend,
) -> Result<
    (
        Vec<WordProbability>,
        HashMap<usize, crate::backend::TokenDistribution>,
    ),
    FilterError,
> {
    let mut probabilities = Vec::new();
    let mut distributions = HashMap::new();
    for (i, word) in text.words.iter().enumerate() {
        if word.kind == WordKind::Punctuation {
            continue;
        }
        match config.invocation {
            Invocation::Separate => {
                probabilities.push(pfilter::word_probability(prefix, text, i, backend)?);
            }
            Invocation::Simultaneous => {
                let (wp, dist) = pfilter::word_probability_with_distribution(
                    prefix,
                    text,
                    i,
                    backend,
                    config.params.n,
                )?;
                probabilities.push(wp);
                distributions.insert(i, dist);
            }
        }
    }
    Ok((probabilities, distributions))
}

/// Sanitize one utterance given the sanitized text of the preceding
/// turn(s). Context words are conditioning material only; decisions cover
/// the current utterance exclusively.
pub fn sanitize_utterance(
    utt: &Utterance,
    prev_context: Option<&str>,
    config: &SanitizeConfig,
    backend: &dyn MlmBackend,
    table: &mut SubstitutionTable,
    rng: &mut SanitizeRng,
) -> Result<SanitizedUtterance, PipelineError> {
    let vocab = backend.vocab();
    let text = tokenize(&utt.text, vocab);

    let prefix: Vec<TokenId> = match (config.use_context, prev_context) {
        (true, Some(ctx)) if !ctx.is_empty() => {
            let ctx_tokens = tokenize(ctx, vocab);
            ctx_tokens
                .tokens
                .iter()
                .map(|t| t.id)
                .chain(std::iter::once(vocab.sep_id()))
                .collect()
        }
        _ => Vec::new(),
    };

    let (probabilities, mut distributions) = probe_words(&prefix, &text, config, backend)?;
    let decisions = pfilter::p_filter(&text, &probabilities, config.threshold_p)?;
    let prob_of: HashMap<usize, &WordProbability> =
        probabilities.iter().map(|wp| (wp.word_index, wp)).collect();

    let mut replacements: HashMap<usize, String> = HashMap::new();
    let mut records = Vec::new();
    for decision in &decisions {
        let i = decision.word_index;
        let word = &text.words[i];
        let wp = prob_of[&i];
        if !decision.flagged {
            records.push(DecisionRecord {
                turn_index: utt.turn_index,
                word_index: i,
                surface: word.surface.clone(),
                probability: wp.probability,
                ic_nats: wp.ic_nats,
                action: DecisionAction::Kept,
                replacement: None,
            });
            continue;
        }
        let (action, replacement) = match config.mode {
            Mode::RedactOnly => (DecisionAction::Removed, None),
            Mode::RedactAndSubstitute => resolve_flagged(
                i,
                &prefix,
                &text,
                &mut distributions,
                config,
                backend,
                table,
                rng,
            )?,
        };
        let rendered = replacement
            .clone()
            .unwrap_or_else(|| REMOVED_SENTINEL.to_string());
        replacements.insert(i, rendered);
        records.push(DecisionRecord {
            turn_index: utt.turn_index,
            word_index: i,
            surface: word.surface.clone(),
            probability: wp.probability,
            ic_nats: wp.ic_nats,
            action,
            replacement,
        });
    }
    records.sort_by_key(|r| r.word_index);

    Ok(SanitizedUtterance {
        sanitized_text: detokenize(&text, &replacements),
        original: utt.clone(),
        decisions: records,
    })
}

/// Table lookup, then numeric or candidate substitution for one flagged
/// word. New pairs are registered in the table.
#[allow(clippy::too_many_arguments)]
fn resolve_flagged(
    word_index: usize,
    prefix: &[TokenId],
    text: &TokenizedText,
    distributions: &mut HashMap<usize, crate::backend::TokenDistribution>,
    config: &SanitizeConfig,
    backend: &dyn MlmBackend,
    table: &mut SubstitutionTable,
    rng: &mut SanitizeRng,
) -> Result<(DecisionAction, Option<String>), PipelineError> {
    let word = &text.words[word_index];
    let surface_lower = word.surface.to_lowercase();

    if let Some(existing) = table.lookup(&surface_lower) {
        return Ok((DecisionAction::Substituted, Some(existing.to_string())));
    }

    let outcome = if word.kind == WordKind::Numeric {
        substitute_numeric(word_index, &surface_lower, &|s| table.is_replacement(s), rng)
    } else {
        let token_ids = text.word_token_ids(word_index);
        let distribution = match distributions.remove(&word_index) {
            Some(d) => d,
            None => {
                // separate invocation: issue the candidate query now
                let chain = pfilter::masking_chain(prefix, text, word_index, backend)
                    .map_err(PipelineError::Filter)?;
                backend
                    .masked_distribution(&chain[0].0, config.params.n, None)
                    .map_err(PipelineError::Backend)?
            }
        };
        propose_substitution(
            word_index,
            &surface_lower,
            &token_ids,
            &distribution,
            backend,
            &config.params,
            &|s| table.is_replacement(s),
            rng,
        )
        .map_err(PipelineError::Backend)?
    };

    match outcome.action {
        SubstitutionAction::Substituted { replacement, .. } => {
            table
                .insert(&surface_lower, &replacement)
                .expect("collisions were excluded during the draw");
            Ok((DecisionAction::Substituted, Some(replacement)))
        }
        SubstitutionAction::Removed => Ok((DecisionAction::Removed, None)),
    }
}

/// Fold [`sanitize_utterance`] over a conversation, threading sanitized
/// context and the substitution table.
pub fn sanitize_dialogue(
    conversation: &[Utterance],
    config: &SanitizeConfig,
    backend: &dyn MlmBackend,
    table: &mut SubstitutionTable,
    rng: &mut SanitizeRng,
) -> Result<Vec<SanitizedUtterance>, PipelineError> {
    let mut out: Vec<SanitizedUtterance> = Vec::with_capacity(conversation.len());
    for utt in conversation {
        let context: Option<String> = if config.use_context && config.context_depth > 0 {
            let depth = config.context_depth.min(out.len());
            if depth == 0 {
                None
            } else {
                Some(
                    out[out.len() - depth..]
                        .iter()
                        .map(|s| s.sanitized_text.as_str())
                        .collect::<Vec<_>>()
                        .join(" "),
                )
            }
        } else {
            None
        };
        let sanitized =
            sanitize_utterance(utt, context.as_deref(), config, backend, table, rng)?;
        out.push(sanitized);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::backend::{CountingBackend, ReferenceBackend};
    use crate::rng::document_rng;
    use crate::tokenizer::test_vocab;

    /// Worked-example backend: names are improbable, embeddings make
    /// david/williams the nearest candidates for john/smith.
    pub(crate) fn example_backend() -> ReferenceBackend {
        let vocab = test_vocab::build();
        let table = "\
_\tmy\t0.03
_\tname\t0.07
_\tis\t0.06
my name is _\tjohn\t0.004
my name is john _\tsm\t0.01
my name is john sm _\t##ith\t0.1
my name is _\tdavid\t0.3
my name is _\twilliams\t0.25
john _\tsm\t0.01
john sm _\t##ith\t0.1
_\tdavid\t0.3
_\twilliams\t0.25
";
        let emb = "\
john\t1 0 0
sm\t0 0.6 0.8
##ith\t0 0.6 -0.8
david\t0.95 0.3122498999199199 0
williams\t0 0.95 0.3122498999199199
";
        ReferenceBackend::from_parts(vocab, table, Some(emb), 3, 128).unwrap()
    }

    fn config(n: usize) -> SanitizeConfig {
        SanitizeConfig {
            threshold_p: 0.01,
            params: SubstitutionParams {
                n,
                k: 1,
                s: 2.0,
                seed: 0,
            },
            ..SanitizeConfig::default()
        }
    }

    fn utter(text: &str, turn: usize) -> Utterance {
        Utterance {
            speaker: "customer".into(),
            text: text.into(),
            turn_index: turn,
        }
    }

    #[test]
    fn worked_example_substitution() {
        let b = example_backend();
        let mut table = SubstitutionTable::new();
        let mut rng = document_rng(0, "ex");
        let out = sanitize_utterance(
            &utter("My name is John Smith.", 0),
            None,
            &config(2),
            &b,
            &mut table,
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.sanitized_text, "My name is David Williams.");
        let actions: Vec<DecisionAction> = out.decisions.iter().map(|d| d.action).collect();
        assert_eq!(
            actions,
            [
                DecisionAction::Kept,
                DecisionAction::Kept,
                DecisionAction::Kept,
                DecisionAction::Substituted,
                DecisionAction::Substituted
            ]
        );
    }

    #[test]
    fn redact_only_mode() {
        let b = example_backend();
        let mut cfg = config(2);
        cfg.mode = Mode::RedactOnly;
        let out = sanitize_utterance(
            &utter("My name is John Smith.", 0),
            None,
            &cfg,
            &b,
            &mut SubstitutionTable::new(),
            &mut document_rng(0, "ex"),
        )
        .unwrap();
        assert_eq!(out.sanitized_text, "My name is [REDACTED] [REDACTED].");
    }

    #[test]
    fn empty_utterance() {
        let b = example_backend();
        let out = sanitize_utterance(
            &utter("", 0),
            None,
            &config(2),
            &b,
            &mut SubstitutionTable::new(),
            &mut document_rng(0, "ex"),
        )
        .unwrap();
        assert_eq!(out.sanitized_text, "");
        assert!(out.decisions.is_empty());
    }

    #[test]
    fn repeated_name_gets_same_replacement() {
        let b = example_backend();
        let conv = vec![
            utter("My name is John Smith.", 0),
            utter("My name is John Smith.", 1),
        ];
        let mut table = SubstitutionTable::new();
        let out = sanitize_dialogue(
            &conv,
            &config(2),
            &b,
            &mut table,
            &mut document_rng(0, "conv"),
        )
        .unwrap();
        let first: Vec<&str> = out[0]
            .decisions
            .iter()
            .filter_map(|d| d.replacement.as_deref())
            .collect();
        let second: Vec<&str> = out[1]
            .decisions
            .iter()
            .filter_map(|d| d.replacement.as_deref())
            .collect();
        assert_eq!(first, second);
        assert!(!first.is_empty());
    }

    #[test]
    fn single_turn_equals_direct_call() {
        let b = example_backend();
        let conv = vec![utter("My name is John Smith.", 0)];
        let dialogue = sanitize_dialogue(
            &conv,
            &config(2),
            &b,
            &mut SubstitutionTable::new(),
            &mut document_rng(0, "x"),
        )
        .unwrap();
        let direct = sanitize_utterance(
            &conv[0],
            None,
            &config(2),
            &b,
            &mut SubstitutionTable::new(),
            &mut document_rng(0, "x"),
        )
        .unwrap();
        assert_eq!(dialogue[0], direct);
    }

    #[test]
    fn modes_are_equivalent() {
        let b = example_backend();
        let conv = vec![
            utter("My name is John Smith.", 0),
            utter("My name is John Smith.", 1),
        ];
        let mut separate_cfg = config(2);
        separate_cfg.invocation = Invocation::Separate;
        let mut simultaneous_cfg = config(2);
        simultaneous_cfg.invocation = Invocation::Simultaneous;
        let a = sanitize_dialogue(
            &conv,
            &separate_cfg,
            &b,
            &mut SubstitutionTable::new(),
            &mut document_rng(5, "c"),
        )
        .unwrap();
        let c = sanitize_dialogue(
            &conv,
            &simultaneous_cfg,
            &b,
            &mut SubstitutionTable::new(),
            &mut document_rng(5, "c"),
        )
        .unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn simultaneous_query_counts() {
        let b = CountingBackend::new(example_backend());
        let mut cfg = config(2);
        cfg.invocation = Invocation::Simultaneous;
        cfg.use_context = false;
        // 4 single-token words -> 4 queries
        sanitize_utterance(
            &utter("my name is john", 0),
            None,
            &cfg,
            &b,
            &mut SubstitutionTable::new(),
            &mut document_rng(0, "q"),
        )
        .unwrap();
        assert_eq!(b.total_calls(), 4);
        b.reset();
        // "smith" = 2 subwords -> 2 queries (1 shared + 1 extra)
        sanitize_utterance(
            &utter("smith", 0),
            None,
            &cfg,
            &b,
            &mut SubstitutionTable::new(),
            &mut document_rng(0, "q"),
        )
        .unwrap();
        assert_eq!(b.total_calls(), 2);
    }

    #[test]
    fn context_feeds_next_turn_and_is_sanitized() {
        let b = example_backend();
        let conv = vec![
            utter("My name is John Smith.", 0),
            utter("The order.", 1),
        ];
        let out = sanitize_dialogue(
            &conv,
            &config(2),
            &b,
            &mut SubstitutionTable::new(),
            &mut document_rng(0, "ctx"),
        )
        .unwrap();
        // decisions reference only current-utterance word indices
        for d in &out[1].decisions {
            assert!(d.word_index < 3);
        }
        assert_eq!(out[1].original.text, "The order.");
    }

    #[test]
    fn no_context_makes_turns_independent() {
        let b = example_backend();
        let mut cfg = config(2);
        cfg.use_context = false;
        let alone = sanitize_utterance(
            &utter("My name is John Smith.", 1),
            None,
            &cfg,
            &b,
            &mut SubstitutionTable::new(),
            &mut document_rng(0, "i"),
        )
        .unwrap();
        let conv = vec![utter("the order.", 0), utter("My name is John Smith.", 1)];
        let threaded = sanitize_dialogue(
            &conv,
            &cfg,
            &b,
            &mut SubstitutionTable::new(),
            &mut document_rng(0, "i"),
        )
        .unwrap();
        let probs_a: Vec<Scalar> = alone.decisions.iter().map(|d| d.probability).collect();
        let probs_b: Vec<Scalar> = threaded[1].decisions.iter().map(|d| d.probability).collect();
        assert_eq!(probs_a, probs_b);
    }
}
