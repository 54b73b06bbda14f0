//! Model bundle directories: a manifest plus vocabulary and backend data.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{MlmBackend, ReferenceBackend, TransformerBackend};
use crate::error::BackendError;
use crate::tokenizer::SubwordVocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Reference,
    Transformer,
}

fn default_marker() -> String {
    "##".into()
}
fn default_unk() -> String {
    "[UNK]".into()
}
fn default_mask() -> String {
    "[MASK]".into()
}
fn default_sep() -> String {
    "[SEP]".into()
}

/// `manifest.json` at the root of a bundle directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleManifest {
    pub backend: BackendKind,
    /// Model variant label; carried into reports so results are attributed
    /// to a concrete model rather than assumed.
    pub variant: String,
    pub vocab_file: String,
    #[serde(default = "default_marker")]
    pub continuation_marker: String,
    #[serde(default = "default_unk")]
    pub unk_token: String,
    #[serde(default = "default_mask")]
    pub mask_token: String,
    #[serde(default = "default_sep")]
    pub sep_token: String,
    pub max_context_len: usize,
    pub embedding_dim: usize,
    /// Reference backend: probability table (TSV).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_file: Option<String>,
    /// Reference backend: optional explicit embeddings (TSV).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings_file: Option<String>,
    /// Transformer backend: safetensors weight file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<TransformerArch>,
}

/// Encoder hyperparameters for the transformer backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformerArch {
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden_dim: usize,
    pub intermediate_dim: usize,
    pub max_position_embeddings: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f32,
}

fn default_eps() -> f32 {
    1e-12
}

impl BundleManifest {
    pub fn load(dir: &Path) -> Result<Self, BackendError> {
        let path = dir.join("manifest.json");
        let data = fs::read_to_string(&path)
            .map_err(|e| BackendError::Bundle(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&data)
            .map_err(|e| BackendError::Bundle(format!("{}: {e}", path.display())))
    }

    pub fn load_vocab(&self, dir: &Path) -> Result<SubwordVocabulary, BackendError> {
        let path = dir.join(&self.vocab_file);
        let file = fs::File::open(&path)
            .map_err(|e| BackendError::Bundle(format!("{}: {e}", path.display())))?;
        let lines = BufReader::new(file)
            .lines()
            .collect::<Result<Vec<_>, _>>()?;
        SubwordVocabulary::from_lines(
            lines,
            &self.continuation_marker,
            &self.unk_token,
            &self.mask_token,
            &self.sep_token,
        )
    }

    fn resolve(&self, dir: &Path, file: &Option<String>, what: &str) -> Result<PathBuf, BackendError> {
        file.as_deref()
            .map(|f| dir.join(f))
            .ok_or_else(|| BackendError::Bundle(format!("manifest missing {what}")))
    }
}

/// Load a backend from a bundle directory, dispatching on the manifest.
pub fn load_backend(dir: &Path) -> Result<Arc<dyn MlmBackend>, BackendError> {
    let manifest = BundleManifest::load(dir)?;
    let vocab = manifest.load_vocab(dir)?;
    match manifest.backend {
        BackendKind::Reference => {
            let table = manifest.resolve(dir, &manifest.table_file, "table_file")?;
            let embeddings = manifest
                .embeddings_file
                .as_deref()
                .map(|f| dir.join(f));
            Ok(Arc::new(ReferenceBackend::load(
                &manifest,
                vocab,
                &table,
                embeddings.as_deref(),
            )?))
        }
        BackendKind::Transformer => {
            let weights = manifest.resolve(dir, &manifest.weights_file, "weights_file")?;
            Ok(Arc::new(TransformerBackend::load(&manifest, vocab, &weights)?))
        }
    }
}
