//! Local BERT-style masked-LM adapter.
//!
//! Loads an encoder (embeddings, self-attention layers, MLM head) from a
//! safetensors weight file using the standard BERT tensor names, and runs
//! forward passes in-process so no text ever leaves the machine.

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, Axis};
use safetensors::SafeTensors;

use crate::backend::{
    top_n_of, BundleManifest, MaskedQuery, MlmBackend, TokenDistribution, TokenId,
    PROBABILITY_FLOOR,
};
use crate::error::BackendError;
use crate::tokenizer::SubwordVocabulary;
use crate::{Embedding, Scalar};

struct Linear {
    weight: Array2<f32>, // [out, in]
    bias: Array1<f32>,
}

impl Linear {
    fn apply(&self, x: &Array2<f32>) -> Array2<f32> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

struct LayerNorm {
    weight: Array1<f32>,
    bias: Array1<f32>,
    eps: f32,
}

impl LayerNorm {
    fn apply(&self, x: &Array2<f32>) -> Array2<f32> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let mean = row.mean().unwrap();
            let var = row.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
            let denom = (var + self.eps).sqrt();
            row.mapv_inplace(|v| (v - mean) / denom);
        }
        out * &self.weight + &self.bias
    }
}

struct EncoderLayer {
    query: Linear,
    key: Linear,
    value: Linear,
    attn_out: Linear,
    attn_norm: LayerNorm,
    intermediate: Linear,
    output: Linear,
    out_norm: LayerNorm,
}

pub struct TransformerBackend {
    vocab: SubwordVocabulary,
    word_embeddings: Array2<f32>,     // [V, H]
    position_embeddings: Array2<f32>, // [P, H]
    token_type_embeddings: Array2<f32>,
    embed_norm: LayerNorm,
    layers: Vec<EncoderLayer>,
    mlm_dense: Linear,
    mlm_norm: LayerNorm,
    decoder_weight: Array2<f32>, // [V, H]
    decoder_bias: Array1<f32>,
    num_heads: usize,
    max_context_len: usize,
    max_positions: usize,
    cls_id: Option<TokenId>,
    variant: String,
}

fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

fn tensor2(st: &SafeTensors, name: &str) -> Result<Array2<f32>, BackendError> {
    let view = st
        .tensor(name)
        .map_err(|e| BackendError::Bundle(format!("missing tensor {name}: {e}")))?;
    if view.dtype() != safetensors::Dtype::F32 {
        return Err(BackendError::Bundle(format!("{name}: expected f32")));
    }
    let shape = view.shape();
    if shape.len() != 2 {
        return Err(BackendError::Bundle(format!("{name}: expected rank 2")));
    }
    let data: Vec<f32> = view
        .data()
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Array2::from_shape_vec((shape[0], shape[1]), data)
        .map_err(|e| BackendError::Bundle(format!("{name}: {e}")))
}

fn tensor1(st: &SafeTensors, name: &str) -> Result<Array1<f32>, BackendError> {
    let view = st
        .tensor(name)
        .map_err(|e| BackendError::Bundle(format!("missing tensor {name}: {e}")))?;
    if view.dtype() != safetensors::Dtype::F32 {
        return Err(BackendError::Bundle(format!("{name}: expected f32")));
    }
    let data: Vec<f32> = view
        .data()
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(Array1::from_vec(data))
}

fn linear(st: &SafeTensors, prefix: &str) -> Result<Linear, BackendError> {
    Ok(Linear {
        weight: tensor2(st, &format!("{prefix}.weight"))?,
        bias: tensor1(st, &format!("{prefix}.bias"))?,
    })
}

fn layer_norm(st: &SafeTensors, prefix: &str, eps: f32) -> Result<LayerNorm, BackendError> {
    Ok(LayerNorm {
        weight: tensor1(st, &format!("{prefix}.weight"))?,
        bias: tensor1(st, &format!("{prefix}.bias"))?,
        eps,
    })
}

impl TransformerBackend {
    pub fn load(
        manifest: &BundleManifest,
        vocab: SubwordVocabulary,
        weights_path: &Path,
    ) -> Result<Self, BackendError> {
        let arch = manifest
            .architecture
            .as_ref()
            .ok_or_else(|| BackendError::Bundle("manifest missing architecture".into()))?;
        let bytes = fs::read(weights_path)
            .map_err(|e| BackendError::Bundle(format!("{}: {e}", weights_path.display())))?;
        let st = SafeTensors::deserialize(&bytes)
            .map_err(|e| BackendError::Bundle(format!("{}: {e}", weights_path.display())))?;
        let eps = arch.layer_norm_eps;

        let word_embeddings = tensor2(&st, "bert.embeddings.word_embeddings.weight")?;
        if word_embeddings.nrows() != vocab.len() {
            return Err(BackendError::Bundle(format!(
                "embedding rows {} do not match vocabulary size {}",
                word_embeddings.nrows(),
                vocab.len()
            )));
        }
        if word_embeddings.ncols() != manifest.embedding_dim {
            return Err(BackendError::Bundle(format!(
                "embedding dim {} does not match manifest {}",
                word_embeddings.ncols(),
                manifest.embedding_dim
            )));
        }

        let mut layers = Vec::with_capacity(arch.num_layers);
        for i in 0..arch.num_layers {
            let p = format!("bert.encoder.layer.{i}");
            layers.push(EncoderLayer {
                query: linear(&st, &format!("{p}.attention.self.query"))?,
                key: linear(&st, &format!("{p}.attention.self.key"))?,
                value: linear(&st, &format!("{p}.attention.self.value"))?,
                attn_out: linear(&st, &format!("{p}.attention.output.dense"))?,
                attn_norm: layer_norm(&st, &format!("{p}.attention.output.LayerNorm"), eps)?,
                intermediate: linear(&st, &format!("{p}.intermediate.dense"))?,
                output: linear(&st, &format!("{p}.output.dense"))?,
                out_norm: layer_norm(&st, &format!("{p}.output.LayerNorm"), eps)?,
            });
        }

        let decoder_weight = match tensor2(&st, "cls.predictions.decoder.weight") {
            Ok(w) => w,
            Err(_) => word_embeddings.clone(), // tied weights
        };
        let decoder_bias = tensor1(&st, "cls.predictions.bias")
            .unwrap_or_else(|_| Array1::zeros(word_embeddings.nrows()));

        Ok(Self {
            cls_id: vocab.lookup("[CLS]"),
            vocab,
            position_embeddings: tensor2(&st, "bert.embeddings.position_embeddings.weight")?,
            token_type_embeddings: tensor2(&st, "bert.embeddings.token_type_embeddings.weight")?,
            embed_norm: layer_norm(&st, "bert.embeddings.LayerNorm", eps)?,
            mlm_dense: linear(&st, "cls.predictions.transform.dense")?,
            mlm_norm: layer_norm(&st, "cls.predictions.transform.LayerNorm", eps)?,
            word_embeddings,
            layers,
            decoder_weight,
            decoder_bias,
            num_heads: arch.num_heads,
            max_context_len: manifest.max_context_len,
            max_positions: arch.max_position_embeddings,
            variant: manifest.variant.clone(),
        })
    }

    /// MLM logits over the vocabulary at `target` for the given sequence.
    fn logits_at(&self, tokens: &[TokenId], target: usize) -> Result<Array1<f32>, BackendError> {
        // wrap with [CLS]/[SEP] when the vocabulary declares them
        let mut seq: Vec<TokenId> = Vec::with_capacity(tokens.len() + 2);
        let mut target = target;
        if let Some(cls) = self.cls_id {
            seq.push(cls);
            target += 1;
        }
        seq.extend_from_slice(tokens);
        if self.cls_id.is_some() {
            seq.push(self.vocab.sep_id());
        }
        if seq.len() > self.max_positions {
            return Err(BackendError::ContextTooLong {
                len: seq.len(),
                max: self.max_positions,
            });
        }

        let n = seq.len();
        let h = self.word_embeddings.ncols();
        let mut hidden = Array2::<f32>::zeros((n, h));
        for (i, &tok) in seq.iter().enumerate() {
            let mut sum = &self.word_embeddings.row(tok as usize) + &self.position_embeddings.row(i);
            sum += &self.token_type_embeddings.row(0);
            hidden.row_mut(i).assign(&sum);
        }
        let mut hidden = self.embed_norm.apply(&hidden);

        let heads = self.num_heads;
        let head_dim = h / heads;
        let scale = 1.0 / (head_dim as f32).sqrt();
        for layer in &self.layers {
            let q = layer.query.apply(&hidden);
            let k = layer.key.apply(&hidden);
            let v = layer.value.apply(&hidden);
            let mut attended = Array2::<f32>::zeros((n, h));
            for head in 0..heads {
                let cols = head * head_dim..(head + 1) * head_dim;
                let qh = q.slice(s![.., cols.clone()]);
                let kh = k.slice(s![.., cols.clone()]);
                let vh = v.slice(s![.., cols.clone()]);
                let mut scores = qh.dot(&kh.t()) * scale;
                for mut row in scores.rows_mut() {
                    let max = row.fold(f32::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|x| (x - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|x| x / sum);
                }
                attended
                    .slice_mut(s![.., cols])
                    .assign(&scores.dot(&vh));
            }
            let attn = layer.attn_out.apply(&attended);
            hidden = layer.attn_norm.apply(&(attn + &hidden));
            let inter = layer.intermediate.apply(&hidden).mapv(gelu);
            let out = layer.output.apply(&inter);
            hidden = layer.out_norm.apply(&(out + &hidden));
        }

        let target_hidden = hidden.slice(s![target..target + 1, ..]).to_owned();
        let transformed = self
            .mlm_norm
            .apply(&self.mlm_dense.apply(&target_hidden).mapv(gelu));
        let logits = transformed.dot(&self.decoder_weight.t()) + &self.decoder_bias;
        Ok(logits.index_axis(Axis(0), 0).to_owned())
    }

    fn probabilities(&self, query: &MaskedQuery) -> Result<Vec<Scalar>, BackendError> {
        let logits = self.logits_at(query.tokens(), query.target_position())?;
        // softmax in f64 for a stable sum
        let max = logits.fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as Scalar;
        let exps: Vec<Scalar> = logits.iter().map(|&l| (l as Scalar - max).exp()).collect();
        let sum: Scalar = exps.iter().sum();
        Ok(exps
            .into_iter()
            .map(|e| (e / sum).max(PROBABILITY_FLOOR))
            .collect())
    }
}

impl MlmBackend for TransformerBackend {
    fn vocab(&self) -> &SubwordVocabulary {
        &self.vocab
    }

    fn max_context_len(&self) -> usize {
        self.max_context_len
    }

    fn embedding_dim(&self) -> usize {
        self.word_embeddings.ncols()
    }

    fn identity(&self) -> String {
        format!("transformer:{}", self.variant)
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
        let probs = self.probabilities(query)?;
        Ok(top_n_of(&probs, top_n, include))
    }

    fn embed(&self, token: TokenId) -> Result<Embedding, BackendError> {
        if (token as usize) >= self.word_embeddings.nrows() {
            return Err(BackendError::InvalidTokenId(token, self.vocab.len()));
        }
        let components = self
            .word_embeddings
            .row(token as usize)
            .iter()
            .map(|&v| v as Scalar)
            .collect();
        Ok(Embedding::new(components)?)
    }
}
