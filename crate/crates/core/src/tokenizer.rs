//! Subword tokenization with word grouping and span-preserving detokenization.
//!
//! Text is lowercased and segmented by greedy longest-match against the
//! backend's vocabulary. Subword tokens keep byte spans into the original
//! string so substitutions can be spliced back without disturbing
//! untouched material.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use crate::error::BackendError;

/// Sentinel rendered in place of removed words.
pub const REMOVED_SENTINEL: &str = "[REDACTED]";

/// Separator characters allowed inside numeric words ("555-1234", "1/2").
const NUMERIC_SEPARATORS: [char; 6] = ['-', '.', '/', '(', ')', '+'];

/// Subword vocabulary shared by the tokenizer and the active backend.
///
/// Continuation pieces are stored with their marker prefix (e.g. `##ith`);
/// [`Token::text`] strips the marker.
#[derive(Debug, Clone)]
pub struct SubwordVocabulary {
    entries: Vec<String>,
    index: HashMap<String, u32>,
    continuation_marker: String,
    unk_id: u32,
    mask_id: u32,
    sep_id: u32,
    max_piece_chars: usize,
}

impl SubwordVocabulary {
    /// Build from one-token-per-line content plus the special-token surfaces
    /// declared by the model bundle manifest.
    pub fn from_lines(
        lines: impl IntoIterator<Item = String>,
        continuation_marker: &str,
        unk_token: &str,
        mask_token: &str,
        sep_token: &str,
    ) -> Result<Self, BackendError> {
        let mut entries = Vec::new();
        let mut index = HashMap::new();
        let mut max_piece_chars = 1;
        for line in lines {
            let tok = line.trim_end_matches(['\r', '\n']).to_string();
            if tok.is_empty() {
                continue;
            }
            let id = entries.len() as u32;
            if index.insert(tok.clone(), id).is_some() {
                return Err(BackendError::Bundle(format!("duplicate vocab entry {tok:?}")));
            }
            max_piece_chars = max_piece_chars.max(tok.chars().count());
            entries.push(tok);
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| BackendError::Bundle(format!("vocabulary lacks special token {name:?}")))
        };
        Ok(Self {
            unk_id: lookup(unk_token)?,
            mask_id: lookup(mask_token)?,
            sep_id: lookup(sep_token)?,
            continuation_marker: continuation_marker.to_string(),
            entries,
            index,
            max_piece_chars,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Vocabulary entry as stored (continuation marker included).
    pub fn entry(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn lookup(&self, entry: &str) -> Option<u32> {
        self.index.get(entry).copied()
    }

    pub fn continuation_marker(&self) -> &str {
        &self.continuation_marker
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn mask_id(&self) -> u32 {
        self.mask_id
    }

    pub fn sep_id(&self) -> u32 {
        self.sep_id
    }

    pub fn is_continuation_entry(&self, id: u32) -> bool {
        self.entry(id)
            .map(|e| e.starts_with(&self.continuation_marker) && e.len() > self.continuation_marker.len())
            .unwrap_or(false)
    }

    /// Special or structural entries that can never serve as replacement words.
    pub fn is_special(&self, id: u32) -> bool {
        id == self.unk_id
            || id == self.mask_id
            || id == self.sep_id
            || self
                .entry(id)
                .map(|e| e.starts_with('[') && e.ends_with(']'))
                .unwrap_or(false)
    }
}

/// One subword token with its byte span in the source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    /// Lowercased piece text, continuation marker stripped.
    pub text: String,
    pub id: u32,
    pub char_span: Range<usize>,
    pub is_continuation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordKind {
    Alphabetic,
    Numeric,
    Mixed,
    Punctuation,
}

impl fmt::Display for WordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WordKind::Alphabetic => "alphabetic",
            WordKind::Numeric => "numeric",
            WordKind::Mixed => "mixed",
            WordKind::Punctuation => "punctuation",
        };
        f.write_str(s)
    }
}

/// A word: a contiguous token range plus the original-cased surface.
#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    pub token_indices: Range<usize>,
    pub surface: String,
    pub kind: WordKind,
}

impl Word {
    pub fn char_span(&self, tokens: &[Token]) -> Range<usize> {
        let first = &tokens[self.token_indices.start];
        let last = &tokens[self.token_indices.end - 1];
        first.char_span.start..last.char_span.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedText {
    pub tokens: Vec<Token>,
    pub words: Vec<Word>,
    pub source: String,
}

impl TokenizedText {
    pub fn word_surface_lower(&self, word_index: usize) -> String {
        self.words[word_index].surface.to_lowercase()
    }

    pub fn word_token_ids(&self, word_index: usize) -> Vec<u32> {
        self.words[word_index]
            .token_indices
            .clone()
            .map(|i| self.tokens[i].id)
            .collect()
    }
}

/// Classify a whitespace-free chunk per the numeric/punctuation rules.
pub fn classify(surface: &str) -> WordKind {
    let mut has_letter = false;
    let mut has_digit = false;
    let mut numeric_ok = true;
    for c in surface.chars() {
        if c.is_ascii_digit() {
            has_digit = true;
        } else if c.is_alphabetic() {
            has_letter = true;
            numeric_ok = false;
        } else if !NUMERIC_SEPARATORS.contains(&c) {
            numeric_ok = false;
        }
    }
    if has_digit && !has_letter && numeric_ok {
        WordKind::Numeric
    } else if !has_letter && !has_digit {
        WordKind::Punctuation
    } else if has_letter && has_digit {
        WordKind::Mixed
    } else {
        WordKind::Alphabetic
    }
}

/// Split `text` into word-level chunks with byte spans.
///
/// Whitespace separates chunks. A chunk that qualifies as numeric stays
/// whole (so "555-1234" is one word); otherwise alphanumeric runs become
/// words and each punctuation character becomes its own word.
fn segment_words(text: &str) -> Vec<(Range<usize>, WordKind)> {
    let mut out = Vec::new();
    let mut chunk_start = None;
    let bytes_len = text.len();
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(start) = chunk_start.take() {
                split_chunk(text, start..i, &mut out);
            }
        } else if chunk_start.is_none() {
            chunk_start = Some(i);
        }
    }
    if let Some(start) = chunk_start {
        split_chunk(text, start..bytes_len, &mut out);
    }
    out
}

fn split_chunk(text: &str, span: Range<usize>, out: &mut Vec<(Range<usize>, WordKind)>) {
    let chunk = &text[span.clone()];
    let kind = classify(chunk);
    if kind == WordKind::Numeric || chunk.chars().all(char::is_alphanumeric) {
        out.push((span, kind));
        return;
    }
    // alphanumeric runs are words, each punctuation char its own word
    let base = span.start;
    let mut run_start: Option<usize> = None;
    for (off, c) in chunk.char_indices() {
        if c.is_alphanumeric() {
            if run_start.is_none() {
                run_start = Some(off);
            }
        } else {
            if let Some(rs) = run_start.take() {
                let sub = base + rs..base + off;
                out.push((sub.clone(), classify(&text[sub])));
            }
            let end = off + c.len_utf8();
            out.push((base + off..base + end, WordKind::Punctuation));
        }
    }
    if let Some(rs) = run_start {
        let sub = base + rs..span.end;
        out.push((sub.clone(), classify(&text[sub])));
    }
}

/// Greedy longest-match subword segmentation of one word.
///
/// Returns (piece_text, id, byte_span, is_continuation). Characters with no
/// vocabulary match degrade to the unknown token one character at a time.
fn wordpiece(
    text: &str,
    span: Range<usize>,
    vocab: &SubwordVocabulary,
) -> Vec<(String, u32, Range<usize>, bool)> {
    // per-char lowercase with a map back to original byte offsets
    let mut lower_chars: Vec<char> = Vec::new();
    let mut char_spans: Vec<Range<usize>> = Vec::new();
    for (i, c) in text[span.clone()].char_indices() {
        let orig = span.start + i..span.start + i + c.len_utf8();
        for lc in c.to_lowercase() {
            lower_chars.push(lc);
            char_spans.push(orig.clone());
        }
    }

    let mut pieces = Vec::new();
    let mut pos = 0;
    while pos < lower_chars.len() {
        let continuation = pos > 0;
        let max_len = vocab.max_piece_chars.min(lower_chars.len() - pos);
        let mut matched = None;
        for len in (1..=max_len).rev() {
            let piece: String = lower_chars[pos..pos + len].iter().collect();
            let key = if continuation {
                format!("{}{}", vocab.continuation_marker(), piece)
            } else {
                piece.clone()
            };
            if let Some(id) = vocab.lookup(&key) {
                matched = Some((piece, id, len));
                break;
            }
        }
        let (piece, id, len) = matched.unwrap_or_else(|| {
            (lower_chars[pos].to_string(), vocab.unk_id(), 1)
        });
        let byte_span = char_spans[pos].start..char_spans[pos + len - 1].end;
        pieces.push((piece, id, byte_span, continuation));
        pos += len;
    }
    pieces
}

/// Tokenize `text` into subword tokens grouped into words.
pub fn tokenize(text: &str, vocab: &SubwordVocabulary) -> TokenizedText {
    let mut tokens = Vec::new();
    let mut words = Vec::new();
    for (span, kind) in segment_words(text) {
        let start_token = tokens.len();
        for (piece, id, byte_span, is_continuation) in wordpiece(text, span.clone(), vocab) {
            tokens.push(Token {
                text: piece,
                id,
                char_span: byte_span,
                is_continuation,
            });
        }
        if tokens.len() > start_token {
            words.push(Word {
                token_indices: start_token..tokens.len(),
                surface: text[span].to_string(),
                kind,
            });
        }
    }
    TokenizedText {
        tokens,
        words,
        source: text.to_string(),
    }
}

/// Restore the original surface's casing pattern onto a replacement.
/// Bracketed placeholders pass through untouched.
pub fn restore_case(original: &str, replacement: &str) -> String {
    if replacement.starts_with('[') {
        return replacement.to_string();
    }
    let letters: Vec<char> = original.chars().filter(|c| c.is_alphabetic()).collect();
    if !letters.is_empty() && letters.iter().all(|c| c.is_uppercase()) && letters.len() > 1 {
        return replacement.to_uppercase();
    }
    let title_cased = original
        .chars()
        .next()
        .map(|c| c.is_uppercase())
        .unwrap_or(false)
        && original.chars().skip(1).all(|c| !c.is_uppercase());
    if title_cased {
        let mut chars = replacement.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => String::new(),
        }
    } else {
        replacement.to_string()
    }
}

/// Splice replacements back into the source text.
///
/// Keys are word indices; untouched words and inter-word gaps come back
/// byte-identical to the source.
pub fn detokenize(tokenized: &TokenizedText, replacements: &HashMap<usize, String>) -> String {
    let mut out = String::with_capacity(tokenized.source.len());
    let mut cursor = 0;
    for (i, word) in tokenized.words.iter().enumerate() {
        let span = word.char_span(&tokenized.tokens);
        out.push_str(&tokenized.source[cursor..span.start]);
        match replacements.get(&i) {
            Some(replacement) => out.push_str(&restore_case(&word.surface, replacement)),
            None => out.push_str(&word.surface),
        }
        cursor = span.end;
    }
    out.push_str(&tokenized.source[cursor..]);
    out
}

#[cfg(test)]
pub(crate) mod test_vocab {
    use super::SubwordVocabulary;

    /// Small vocabulary covering the worked examples; single lowercase
    /// letters are included so arbitrary alphabetic words tokenize without
    /// falling back to [UNK].
    pub fn build() -> SubwordVocabulary {
        let mut lines: Vec<String> = ["[UNK]", "[MASK]", "[SEP]"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for w in [
            "my", "name", "is", "john", "david", "williams", "table", "sm", "##ith", ".", "-",
            "the", "order", "account", "number", "street", "email", "phone", "zip",
        ] {
            lines.push(w.to_string());
        }
        for c in 'a'..='z' {
            lines.push(c.to_string());
            lines.push(format!("##{c}"));
        }
        for c in '0'..='9' {
            lines.push(c.to_string());
            lines.push(format!("##{c}"));
        }
        for c in ["##-", "##.", "##/", "##(", "##)", "##+"] {
            lines.push(c.to_string());
        }
        SubwordVocabulary::from_lines(lines, "##", "[UNK]", "[MASK]", "[SEP]").unwrap()
    }
}
