//! Gold labeling from dialogue metadata and Precision/Recall/F1 scoring,
//! plus the threshold sweep.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use crate::backend::MlmBackend;
use crate::corpus::{ConversationRecord, Corpus, DecisionLine};
use crate::error::EvalError;
use crate::pfilter;
use crate::pipeline::DecisionAction;
use crate::substitution::word_boundary_regex;
use crate::tokenizer::{tokenize, SubwordVocabulary, WordKind};
use crate::Scalar;

/// The metadata categories treated as PII by default.
pub const DEFAULT_CATEGORIES: [&str; 8] = [
    "customer name",
    "username",
    "email",
    "phone number",
    "account id",
    "order id",
    "street address",
    "zip code",
];

/// Word-level gold labels for one conversation.
#[derive(Debug, Clone, Default)]
pub struct GoldLabeling {
    /// (turn, word) -> first-declared category that matched.
    labels: HashMap<(usize, usize), String>,
    /// All non-punctuation words of the conversation.
    universe: HashSet<(usize, usize)>,
    /// Metadata values that never matched any turn.
    pub warnings: Vec<String>,
}

impl GoldLabeling {
    pub fn is_sensitive(&self, turn: usize, word: usize) -> bool {
        self.labels.contains_key(&(turn, word))
    }

    pub fn category(&self, turn: usize, word: usize) -> Option<&str> {
        self.labels.get(&(turn, word)).map(String::as_str)
    }

    pub fn universe(&self) -> &HashSet<(usize, usize)> {
        &self.universe
    }

    pub fn sensitive_count(&self) -> usize {
        self.labels.len()
    }
}

/// Mark every word whose span overlaps a whole-word occurrence of a
/// metadata slot value from the configured categories. Multi-word values
/// mark all constituent words; overlapping categories keep the
/// first-declared label.
pub fn gold_labels(
    conv: &ConversationRecord,
    categories: &[String],
    vocab: &SubwordVocabulary,
) -> GoldLabeling {
    let mut gold = GoldLabeling::default();
    let mut value_matched: HashMap<(usize, usize), bool> = HashMap::new();

    for (turn_index, turn) in conv.turns.iter().enumerate() {
        let text = tokenize(&turn.text, vocab);
        for (w, word) in text.words.iter().enumerate() {
            if word.kind != WordKind::Punctuation {
                gold.universe.insert((turn_index, w));
            }
        }
        for (cat_index, category) in categories.iter().enumerate() {
            let Some(values) = conv.metadata.get(category) else {
                continue;
            };
            for (val_index, value) in values.iter().enumerate() {
                if value.trim().is_empty() {
                    continue;
                }
                let re = word_boundary_regex(value.trim());
                let matched = value_matched.entry((cat_index, val_index)).or_insert(false);
                for m in re.find_iter(&turn.text) {
                    *matched = true;
                    for (w, word) in text.words.iter().enumerate() {
                        if word.kind == WordKind::Punctuation {
                            continue;
                        }
                        let span = word.char_span(&text.tokens);
                        if span.start < m.end() && m.start() < span.end {
                            gold.labels
                                .entry((turn_index, w))
                                .or_insert_with(|| category.clone());
                        }
                    }
                }
            }
        }
    }

    for (cat_index, category) in categories.iter().enumerate() {
        let Some(values) = conv.metadata.get(category) else {
            continue;
        };
        for (val_index, value) in values.iter().enumerate() {
            if !value.trim().is_empty()
                && !value_matched.get(&(cat_index, val_index)).copied().unwrap_or(false)
            {
                gold.warnings.push(format!(
                    "conversation {}: value {value:?} of category {category:?} matched no turn",
                    conv.id
                ));
            }
        }
    }
    gold
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Harmonic mean of precision and recall.
pub fn f1_score(precision: Scalar, recall: Scalar) -> Scalar {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub threshold_used: Scalar,
    pub counts: ConfusionCounts,
    /// None when no word was predicted unsafe (undefined, not 0).
    pub precision: Option<Scalar>,
    /// None when the gold set is empty.
    pub recall: Option<Scalar>,
    pub f1: Scalar,
    /// False when precision or recall was undefined and f1 fell back to 0.
    pub f1_defined: bool,
    pub per_category_recall: BTreeMap<String, Option<Scalar>>,
}

impl EvalReport {
    pub fn from_counts(
        threshold_used: Scalar,
        counts: ConfusionCounts,
        per_category: BTreeMap<String, (usize, usize)>, // caught, total
    ) -> Self {
        let precision = (counts.tp + counts.fp > 0)
            .then(|| counts.tp as Scalar / (counts.tp + counts.fp) as Scalar);
        let recall = (counts.tp + counts.fn_ > 0)
            .then(|| counts.tp as Scalar / (counts.tp + counts.fn_) as Scalar);
        let (f1, f1_defined) = match (precision, recall) {
            (Some(p), Some(r)) => (f1_score(p, r), true),
            _ => (0.0, false),
        };
        let per_category_recall = per_category
            .into_iter()
            .map(|(cat, (caught, total))| {
                (cat, (total > 0).then(|| caught as Scalar / total as Scalar))
            })
            .collect();
        Self {
            threshold_used,
            counts,
            precision,
            recall,
            f1,
            f1_defined,
            per_category_recall,
        }
    }
}

/// Score a decision log against metadata-derived gold labels.
///
/// A word is predicted unsafe iff its action is substituted or removed.
/// The decision log must cover exactly the non-punctuation words of the
/// corpus.
pub fn score(
    corpus: &Corpus,
    decisions: &[DecisionLine],
    categories: &[String],
    vocab: &SubwordVocabulary,
    threshold_used: Scalar,
) -> Result<EvalReport, EvalError> {
    let mut predicted: HashMap<(&str, usize, usize), bool> = HashMap::new();
    for d in decisions {
        let key = (d.conversation.as_str(), d.turn, d.word);
        if predicted
            .insert(key, d.action != DecisionAction::Kept)
            .is_some()
        {
            return Err(EvalError::CoverageMismatch(format!(
                "duplicate decision for {key:?}"
            )));
        }
    }

    let mut counts = ConfusionCounts::default();
    let mut per_category: BTreeMap<String, (usize, usize)> = categories
        .iter()
        .map(|c| (c.clone(), (0, 0)))
        .collect();
    let mut seen = 0usize;

    for conv in &corpus.conversations {
        let gold = gold_labels(conv, categories, vocab);
        for &(turn, word) in gold.universe() {
            let key = (conv.id.as_str(), turn, word);
            let Some(&unsafe_pred) = predicted.get(&key) else {
                return Err(EvalError::CoverageMismatch(format!(
                    "no decision for {key:?}"
                )));
            };
            seen += 1;
            let sensitive = gold.is_sensitive(turn, word);
            match (sensitive, unsafe_pred) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fn_ += 1,
                (false, true) => counts.fp += 1,
                (false, false) => counts.tn += 1,
            }
            if sensitive {
                let cat = gold.category(turn, word).expect("sensitive word has category");
                let slot = per_category.entry(cat.to_string()).or_insert((0, 0));
                slot.1 += 1;
                if unsafe_pred {
                    slot.0 += 1;
                }
            }
        }
    }
    if seen != predicted.len() {
        return Err(EvalError::CoverageMismatch(format!(
            "{} decisions cover words outside the gold universe",
            predicted.len() - seen
        )));
    }
    Ok(EvalReport::from_counts(threshold_used, counts, per_category))
}

/// One report per threshold from a single probability pass.
///
/// Probabilities are computed once without cross-turn context (they do
/// not depend on the threshold), then each threshold flags and scores.
pub fn sweep(
    corpus: &Corpus,
    backend: &dyn MlmBackend,
    categories: &[String],
    thresholds: &[Scalar],
) -> Result<Vec<EvalReport>, EvalError> {
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::UnsortedThresholds);
    }
    let vocab = backend.vocab();

    // single probability pass
    struct Probe {
        turn: usize,
        word: usize,
        probability: Scalar,
    }
    let mut probes: Vec<(usize, Vec<Probe>)> = Vec::new(); // conversation index -> probes
    for (ci, conv) in corpus.conversations.iter().enumerate() {
        let mut conv_probes = Vec::new();
        for (turn_index, turn) in conv.turns.iter().enumerate() {
            let text = tokenize(&turn.text, vocab);
            for (w, word) in text.words.iter().enumerate() {
                if word.kind == WordKind::Punctuation {
                    continue;
                }
                let wp = pfilter::word_probability(&[], &text, w, backend)
                    .map_err(|e| EvalError::Pipeline(e.into()))?;
                conv_probes.push(Probe {
                    turn: turn_index,
                    word: w,
                    probability: wp.probability,
                });
            }
        }
        probes.push((ci, conv_probes));
    }

    let golds: Vec<GoldLabeling> = corpus
        .conversations
        .iter()
        .map(|c| gold_labels(c, categories, vocab))
        .collect();

    let mut reports = Vec::with_capacity(thresholds.len());
    for &p in thresholds {
        let mut counts = ConfusionCounts::default();
        let mut per_category: BTreeMap<String, (usize, usize)> = categories
            .iter()
            .map(|c| (c.clone(), (0, 0)))
            .collect();
        for (ci, conv_probes) in &probes {
            let gold = &golds[*ci];
            for probe in conv_probes {
                let unsafe_pred = probe.probability < p;
                let sensitive = gold.is_sensitive(probe.turn, probe.word);
                match (sensitive, unsafe_pred) {
                    (true, true) => counts.tp += 1,
                    (true, false) => counts.fn_ += 1,
                    (false, true) => counts.fp += 1,
                    (false, false) => counts.tn += 1,
                }
                if sensitive {
                    let cat = gold
                        .category(probe.turn, probe.word)
                        .expect("sensitive word has category");
                    let slot = per_category.entry(cat.to_string()).or_insert((0, 0));
                    slot.1 += 1;
                    if unsafe_pred {
                        slot.0 += 1;
                    }
                }
            }
        }
        reports.push(EvalReport::from_counts(p, counts, per_category));
    }
    Ok(reports)
}

fn fmt_opt(v: Option<Scalar>) -> String {
    match v {
        Some(v) => format!("{v:.2}"),
        None => "n/a".into(),
    }
}

/// Aligned-column text rendering of sweep results.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>8} {:>10} {:>6}\n",
        "Threshold", "Recall", "Precision", "F1"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<16} {:>8} {:>10} {:>6.2}\n",
            format!("p={:.0e}", r.threshold_used),
            fmt_opt(r.recall),
            fmt_opt(r.precision),
            r.f1
        ));
    }
    out
}
