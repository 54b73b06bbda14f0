//! Loads a tiny randomly initialized BERT-style bundle and checks the
//! forward pass contract: normalized probabilities, deterministic
//! output, canonical top-n ordering, embeddings, and length limits.

use std::collections::HashMap;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use safetensors::tensor::TensorView;
use safetensors::Dtype;

use textsan::backend::MaskedQuery;
use textsan::load_backend;

const HIDDEN: usize = 8;
const INTERMEDIATE: usize = 16;
const LAYERS: usize = 2;
const HEADS: usize = 2;
const MAX_POS: usize = 16;

fn vocab_lines() -> Vec<&'static str> {
    vec![
        "[UNK]", "[MASK]", "[SEP]", "[CLS]", "red", "green", "blue", "sky", "sea", "##s", "a", "b",
    ]
}

struct TensorStore {
    tensors: Vec<(String, Vec<usize>, Vec<u8>)>,
}

impl TensorStore {
    fn new() -> Self {
        Self { tensors: vec![] }
    }

    fn add(&mut self, name: &str, shape: &[usize], rng: &mut StdRng) {
        let count: usize = shape.iter().product();
        let data: Vec<u8> = (0..count)
            .flat_map(|_| (rng.gen_range(-0.2f32..0.2)).to_le_bytes())
            .collect();
        self.tensors.push((name.into(), shape.to_vec(), data));
    }

    fn add_const(&mut self, name: &str, shape: &[usize], value: f32) {
        let count: usize = shape.iter().product();
        let data: Vec<u8> = (0..count).flat_map(|_| value.to_le_bytes()).collect();
        self.tensors.push((name.into(), shape.to_vec(), data));
    }

    fn serialize(&self) -> Vec<u8> {
        let views: HashMap<String, TensorView<'_>> = self
            .tensors
            .iter()
            .map(|(name, shape, data)| {
                (
                    name.clone(),
                    TensorView::new(Dtype::F32, shape.clone(), data).unwrap(),
                )
            })
            .collect();
        safetensors::serialize(&views, &None).unwrap()
    }
}

fn write_bundle(dir: &Path) {
    let vocab = vocab_lines();
    let v = vocab.len();
    let mut rng = StdRng::seed_from_u64(1234);
    let mut store = TensorStore::new();

    store.add("bert.embeddings.word_embeddings.weight", &[v, HIDDEN], &mut rng);
    store.add("bert.embeddings.position_embeddings.weight", &[MAX_POS, HIDDEN], &mut rng);
    store.add("bert.embeddings.token_type_embeddings.weight", &[2, HIDDEN], &mut rng);
    store.add_const("bert.embeddings.LayerNorm.weight", &[HIDDEN], 1.0);
    store.add_const("bert.embeddings.LayerNorm.bias", &[HIDDEN], 0.0);

    for i in 0..LAYERS {
        let p = format!("bert.encoder.layer.{i}");
        for part in ["query", "key", "value"] {
            store.add(&format!("{p}.attention.self.{part}.weight"), &[HIDDEN, HIDDEN], &mut rng);
            store.add(&format!("{p}.attention.self.{part}.bias"), &[HIDDEN], &mut rng);
        }
        store.add(&format!("{p}.attention.output.dense.weight"), &[HIDDEN, HIDDEN], &mut rng);
        store.add(&format!("{p}.attention.output.dense.bias"), &[HIDDEN], &mut rng);
        store.add_const(&format!("{p}.attention.output.LayerNorm.weight"), &[HIDDEN], 1.0);
        store.add_const(&format!("{p}.attention.output.LayerNorm.bias"), &[HIDDEN], 0.0);
        store.add(&format!("{p}.intermediate.dense.weight"), &[INTERMEDIATE, HIDDEN], &mut rng);
        store.add(&format!("{p}.intermediate.dense.bias"), &[INTERMEDIATE], &mut rng);
        store.add(&format!("{p}.output.dense.weight"), &[HIDDEN, INTERMEDIATE], &mut rng);
        store.add(&format!("{p}.output.dense.bias"), &[HIDDEN], &mut rng);
        store.add_const(&format!("{p}.output.LayerNorm.weight"), &[HIDDEN], 1.0);
        store.add_const(&format!("{p}.output.LayerNorm.bias"), &[HIDDEN], 0.0);
    }

    store.add("cls.predictions.transform.dense.weight", &[HIDDEN, HIDDEN], &mut rng);
    store.add("cls.predictions.transform.dense.bias", &[HIDDEN], &mut rng);
    store.add_const("cls.predictions.transform.LayerNorm.weight", &[HIDDEN], 1.0);
    store.add_const("cls.predictions.transform.LayerNorm.bias", &[HIDDEN], 0.0);
    // decoder stays tied to the word embeddings
    store.add("cls.predictions.bias", &[v], &mut rng);

    std::fs::write(dir.join("model.safetensors"), store.serialize()).unwrap();
    std::fs::write(dir.join("vocab.txt"), vocab.join("\n")).unwrap();
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::json!({
            "backend": "transformer",
            "variant": "tiny-test",
            "vocab_file": "vocab.txt",
            "max_context_len": 8,
            "embedding_dim": HIDDEN,
            "weights_file": "model.safetensors",
            "architecture": {
                "num_layers": LAYERS,
                "num_heads": HEADS,
                "hidden_dim": HIDDEN,
                "intermediate_dim": INTERMEDIATE,
                "max_position_embeddings": MAX_POS,
            }
        })
        .to_string(),
    )
    .unwrap();
}

#[test]
fn tiny_transformer_contract() {
    let dir = tempfile::tempdir().unwrap();
    write_bundle(dir.path());
    let backend = load_backend(dir.path()).unwrap();
    assert_eq!(backend.identity(), "transformer:tiny-test");
    assert_eq!(backend.embedding_dim(), HIDDEN);

    let vocab = backend.vocab();
    let red = vocab.lookup("red").unwrap();
    let sky = vocab.lookup("sky").unwrap();
    let ids = vec![red, vocab.mask_id(), sky];
    let query = MaskedQuery::new(ids, 1, vocab.mask_id()).unwrap();

    // full distribution is normalized and canonically sorted
    let dist = backend.masked_distribution(&query, vocab.len(), None).unwrap();
    let sum: f64 = dist.entries().iter().map(|(_, p)| p).sum();
    assert!((sum - 1.0).abs() < 1e-6, "softmax sum {sum}");
    assert!(dist.entries().windows(2).all(|w| w[0].1 >= w[1].1));
    assert!(dist.entries().iter().all(|&(_, p)| p > 0.0 && p <= 1.0));

    // deterministic across calls
    let again = backend.masked_distribution(&query, vocab.len(), None).unwrap();
    assert_eq!(dist, again);

    // include channel agrees with the full distribution
    let with_include = backend.masked_distribution(&query, 3, Some(sky)).unwrap();
    assert_eq!(
        with_include.probability_of(sky),
        dist.probability_of(sky)
    );
    let p = backend.token_probability(&query, sky).unwrap();
    assert_eq!(Some(p), dist.probability_of(sky));

    // truncation honors top_n
    assert_eq!(with_include.truncation(), 3);

    // embeddings come back at the declared width
    let e = backend.embed(red).unwrap();
    assert_eq!(e.dim(), HIDDEN);
    assert!(backend.embed(vocab.len() as u32).is_err());

    // a different mask position yields a different distribution
    let other = MaskedQuery::new(vec![vocab.mask_id(), red, sky], 0, vocab.mask_id()).unwrap();
    let other_dist = backend.masked_distribution(&other, vocab.len(), None).unwrap();
    assert_ne!(dist, other_dist);

    // sequences beyond the declared context length are rejected
    let long = vec![vocab.mask_id(); 9];
    let long_query = MaskedQuery::new(long, 0, vocab.mask_id()).unwrap();
    assert!(backend.masked_distribution(&long_query, 5, None).is_err());
}
