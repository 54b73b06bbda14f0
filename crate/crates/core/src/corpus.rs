//! Dialogue corpus file formats and the corpus-level sanitization run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::MlmBackend;
use crate::pipeline::{
    sanitize_utterance, DecisionAction, SanitizeConfig, TableScope, Utterance,
};
use crate::rng::document_rng;
use crate::substitution::SubstitutionTable;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub speaker: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub id: String,
    pub turns: Vec<TurnRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub conversations: Vec<ConversationRecord>,
}

impl Corpus {
    pub fn from_json(data: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(data)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("corpus serializes")
    }

    /// Plain-text mode: one utterance per line, the whole file is one
    /// document.
    pub fn from_plain_text(id: &str, data: &str) -> Self {
        let turns = data
            .lines()
            .map(|line| TurnRecord {
                speaker: String::new(),
                text: line.to_string(),
            })
            .collect();
        Self {
            conversations: vec![ConversationRecord {
                id: id.to_string(),
                turns,
                metadata: BTreeMap::new(),
            }],
        }
    }

    pub fn to_plain_text(&self) -> String {
        let mut out = String::new();
        for conv in &self.conversations {
            for turn in &conv.turns {
                out.push_str(&turn.text);
                out.push('\n');
            }
        }
        out
    }
}

/// One line of the sidecar decisions log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionLine {
    pub conversation: String,
    pub turn: usize,
    pub word: usize,
    pub surface: String,
    pub prob: Scalar,
    pub ic: Scalar,
    pub action: DecisionAction,
    pub replacement: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRecord {
    pub conversation: String,
    pub turn: usize,
    pub error: String,
}

/// Output of a corpus run: sanitized corpus, flattened decision log,
/// substitution tables, and any per-conversation failures.
#[derive(Debug)]
pub struct SanitizeRun {
    pub sanitized: Corpus,
    pub decisions: Vec<DecisionLine>,
    /// Keyed by conversation id; the empty key holds the corpus-wide
    /// table when `table_scope = corpus`.
    pub tables: BTreeMap<String, SubstitutionTable>,
    pub failures: Vec<FailureRecord>,
}

impl SanitizeRun {
    pub fn decisions_jsonl(&self) -> String {
        let mut out = String::new();
        for line in &self.decisions {
            out.push_str(&serde_json::to_string(line).expect("decision serializes"));
            out.push('\n');
        }
        out
    }

    /// Table export. Corpus scope: flat {original: replacement}.
    /// Per-conversation scope: {"conversations": {id: {original: replacement}}}.
    pub fn tables_json(&self, scope: TableScope) -> String {
        match scope {
            TableScope::Corpus => self
                .tables
                .get("")
                .cloned()
                .unwrap_or_default()
                .to_json(),
            TableScope::PerConversation => {
                let nested: BTreeMap<&str, BTreeMap<&str, &str>> = self
                    .tables
                    .iter()
                    .map(|(id, t)| (id.as_str(), t.iter().collect()))
                    .collect();
                let wrapper = serde_json::json!({ "conversations": nested });
                serde_json::to_string_pretty(&wrapper).expect("tables serialize")
            }
        }
    }
}

/// Sanitize every conversation. Failing utterances abort their own
/// conversation with the preceding turns kept and a failure record;
/// other conversations are unaffected.
pub fn sanitize_corpus(
    corpus: &Corpus,
    config: &SanitizeConfig,
    backend: &dyn MlmBackend,
) -> SanitizeRun {
    let mut sanitized = Vec::with_capacity(corpus.conversations.len());
    let mut decisions = Vec::new();
    let mut tables: BTreeMap<String, SubstitutionTable> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut corpus_table = SubstitutionTable::new();

    for conv in &corpus.conversations {
        let mut rng = document_rng(config.params.seed, &conv.id);
        let mut conv_table = SubstitutionTable::new();
        let table = match config.table_scope {
            TableScope::Corpus => &mut corpus_table,
            TableScope::PerConversation => &mut conv_table,
        };

        let mut out_turns = Vec::with_capacity(conv.turns.len());
        let mut context_window: Vec<String> = Vec::new();
        for (turn_index, turn) in conv.turns.iter().enumerate() {
            let utt = Utterance {
                speaker: turn.speaker.clone(),
                text: turn.text.clone(),
                turn_index,
            };
            let context = if config.use_context && config.context_depth > 0 {
                let depth = config.context_depth.min(context_window.len());
                if depth == 0 {
                    None
                } else {
                    Some(context_window[context_window.len() - depth..].join(" "))
                }
            } else {
                None
            };
            match sanitize_utterance(&utt, context.as_deref(), config, backend, table, &mut rng)
            {
                Ok(result) => {
                    for d in &result.decisions {
                        decisions.push(DecisionLine {
                            conversation: conv.id.clone(),
                            turn: turn_index,
                            word: d.word_index,
                            surface: d.surface.clone(),
                            prob: d.probability,
                            ic: d.ic_nats,
                            action: d.action,
                            replacement: d.replacement.clone(),
                        });
                    }
                    context_window.push(result.sanitized_text.clone());
                    out_turns.push(TurnRecord {
                        speaker: turn.speaker.clone(),
                        text: result.sanitized_text,
                    });
                }
                Err(e) => {
                    failures.push(FailureRecord {
                        conversation: conv.id.clone(),
                        turn: turn_index,
                        error: e.to_string(),
                    });
                    break;
                }
            }
        }
        if config.table_scope == TableScope::PerConversation {
            tables.insert(conv.id.clone(), conv_table);
        }
        sanitized.push(ConversationRecord {
            id: conv.id.clone(),
            turns: out_turns,
            metadata: conv.metadata.clone(),
        });
    }
    if config.table_scope == TableScope::Corpus {
        tables.insert(String::new(), corpus_table);
    }

    SanitizeRun {
        sanitized: Corpus {
            conversations: sanitized,
        },
        decisions,
        tables,
        failures,
    }
}

/// Parse a table export produced by [`SanitizeRun::tables_json`]:
/// either a flat object (applied to every conversation) or the
/// per-conversation wrapper.
pub fn parse_table_export(
    data: &str,
) -> Result<BTreeMap<String, SubstitutionTable>, crate::error::TableError> {
    use crate::error::TableError;
    let value: serde_json::Value =
        serde_json::from_str(data).map_err(|e| TableError::Malformed(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| TableError::Malformed("expected a JSON object".into()))?;
    let mut out = BTreeMap::new();
    if let Some(convs) = obj.get("conversations").and_then(|v| v.as_object()) {
        for (id, table) in convs {
            let table = SubstitutionTable::from_json(&table.to_string())?;
            out.insert(id.clone(), table);
        }
    } else {
        out.insert(String::new(), SubstitutionTable::from_json(data)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Mode;

    #[test]
    fn json_round_trip() {
        let data = r#"{"conversations":[{"id":"c1","turns":[{"speaker":"customer","text":"hi"}],"metadata":{"customer name":["John Smith"]}}]}"#;
        let corpus = Corpus::from_json(data).unwrap();
        assert_eq!(corpus.conversations.len(), 1);
        assert_eq!(
            corpus.conversations[0].metadata["customer name"],
            ["John Smith"]
        );
        let back = Corpus::from_json(&corpus.to_json()).unwrap();
        assert_eq!(corpus, back);
    }

    #[test]
    fn plain_text_round_trip() {
        let corpus = Corpus::from_plain_text("doc", "line one\nline two\n");
        assert_eq!(corpus.conversations[0].turns.len(), 2);
        assert_eq!(corpus.to_plain_text(), "line one\nline two\n");
    }

    #[test]
    fn corpus_run_emits_decisions_and_tables() {
        let backend = crate::pipeline::tests::example_backend();
        let corpus = Corpus::from_json(
            r#"{"conversations":[{"id":"c1","turns":[{"speaker":"a","text":"My name is John Smith."}]}]}"#,
        )
        .unwrap();
        let config = SanitizeConfig {
            threshold_p: 0.01,
            mode: Mode::RedactAndSubstitute,
            params: crate::substitution::SubstitutionParams {
                n: 2,
                k: 1,
                s: 2.0,
                seed: 0,
            },
            ..SanitizeConfig::default()
        };
        let run = sanitize_corpus(&corpus, &config, &backend);
        assert!(run.failures.is_empty());
        assert_eq!(
            run.sanitized.conversations[0].turns[0].text,
            "My name is David Williams."
        );
        assert_eq!(run.decisions.len(), 5);
        let table = &run.tables["c1"];
        assert_eq!(table.lookup("john"), Some("david"));
        assert_eq!(table.lookup("smith"), Some("williams"));

        let exported = run.tables_json(TableScope::PerConversation);
        let parsed = parse_table_export(&exported).unwrap();
        assert_eq!(parsed["c1"], run.tables["c1"]);
    }

    #[test]
    fn flat_table_export_parses() {
        let parsed = parse_table_export(r#"{"john":"david"}"#).unwrap();
        assert_eq!(parsed[""].lookup("john"), Some("david"));
        assert!(parse_table_export("[1,2]").is_err());
    }
}
