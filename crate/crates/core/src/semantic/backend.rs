//! The pluggable masked-LM backend: anything that maps a token-id sequence
//! to per-token hidden vectors and exposes a vocabulary-distribution head.
//!
//! The bundled implementation is a small pre-norm-free transformer encoder
//! (single-head attention, ReLU feed-forward, post-residual layer norm)
//! with an untied output projection. The reference configuration loads a
//! 12-layer/768-hidden checkpoint; tests run a 2-layer/64-hidden one.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{uniform_init, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{KirsError, Result, StoreError};
use crate::infomax::Reader;

use super::tokenizer::Vocab;

/// Contract every backend satisfies: per-token encoding plus a vocabulary
/// head, with its parameters reachable for the optimizer.
pub trait LmBackend {
    fn hidden_size(&self) -> usize;
    fn max_len(&self) -> usize;
    fn vocab(&self) -> &Vocab;
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    /// Bind all parameters onto the tape once per batch.
    fn bind(&self, tape: &mut Tape) -> BackendVars;
    /// Per-token hidden states (len × hidden) for one sequence.
    fn encode(&self, tape: &mut Tape, vars: &BackendVars, tokens: &[u32]) -> Var;
    /// Vocabulary logits (rows × vocab) for a matrix of hidden rows.
    fn logits(&self, tape: &mut Tape, vars: &BackendVars, hidden_rows: Var) -> Var;
}

/// Parameter bindings of one batch.
pub struct BackendVars {
    pub bound: Vec<(ParamId, Var)>,
    pub by_slot: Vec<Var>,
}

impl BackendVars {
    fn var(&self, slot: usize) -> Var {
        self.by_slot[slot]
    }
}

/// Architecture of the bundled transformer backend.
#[derive(Clone, Debug, PartialEq)]
pub struct BackendConfig {
    pub hidden: usize,
    pub layers: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        // Reference scale: 12 layers, 768 hidden.
        BackendConfig {
            hidden: 768,
            layers: 12,
            max_len: 128,
            seed: 0,
        }
    }
}

impl BackendConfig {
    /// Desk-scale configuration for tests and synthetic runs.
    pub fn tiny() -> Self {
        BackendConfig {
            hidden: 64,
            layers: 2,
            max_len: 64,
            seed: 0,
        }
    }
}

struct LayerIds {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    ff1_w: ParamId,
    ff1_b: ParamId,
    ff2_w: ParamId,
    ff2_b: ParamId,
}

/// Single-head transformer encoder with an untied vocabulary head.
pub struct TinyTransformer {
    store: ParamStore,
    vocab: Vocab,
    config: BackendConfig,
    tok_emb: ParamId,
    pos_emb: ParamId,
    layers: Vec<LayerIds>,
    out_w: ParamId,
    out_b: ParamId,
}

const LN_EPS: f64 = 1e-5;

impl TinyTransformer {
    pub fn init(vocab: Vocab, config: BackendConfig) -> Self {
        let d = config.hidden;
        let v = vocab.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let init = 0.05;
        let tok_emb = store.insert("lm_tok_emb", uniform_init(&mut rng, v, d, init));
        let pos_emb = store.insert("lm_pos_emb", uniform_init(&mut rng, config.max_len, d, init));
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let mat = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
                uniform_init(rng, rows, cols, (6.0 / (rows + cols) as f64).sqrt())
            };
            layers.push(LayerIds {
                wq: store.insert(&format!("lm_{l}_wq"), mat(&mut rng, d, d)),
                wk: store.insert(&format!("lm_{l}_wk"), mat(&mut rng, d, d)),
                wv: store.insert(&format!("lm_{l}_wv"), mat(&mut rng, d, d)),
                wo: store.insert(&format!("lm_{l}_wo"), mat(&mut rng, d, d)),
                ff1_w: store.insert(&format!("lm_{l}_ff1w"), mat(&mut rng, 2 * d, d)),
                ff1_b: store.insert(&format!("lm_{l}_ff1b"), Tensor::zeros(1, 2 * d)),
                ff2_w: store.insert(&format!("lm_{l}_ff2w"), mat(&mut rng, d, 2 * d)),
                ff2_b: store.insert(&format!("lm_{l}_ff2b"), Tensor::zeros(1, d)),
            });
        }
        let out_w = store.insert("lm_out_w", uniform_init(&mut rng, v, d, init));
        let out_b = store.insert("lm_out_b", Tensor::zeros(1, v));
        TinyTransformer {
            store,
            vocab,
            config,
            tok_emb,
            pos_emb,
            layers,
            out_w,
            out_b,
        }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn all_param_ids(&self) -> Vec<ParamId> {
        self.store.ids().collect()
    }

    /// Persist as a checkpoint directory: `vocab.txt` plus `weights.bin`.
    pub fn save_checkpoint(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| KirsError::io(dir, e))?;
        self.vocab.save(dir.join("vocab.txt"))?;

        let mut payload = Vec::new();
        payload.extend_from_slice(&(self.config.hidden as u32).to_le_bytes());
        payload.extend_from_slice(&(self.config.layers as u32).to_le_bytes());
        payload.extend_from_slice(&(self.config.max_len as u32).to_le_bytes());
        payload.extend_from_slice(&(self.vocab.len() as u32).to_le_bytes());
        payload.extend_from_slice(&self.config.seed.to_le_bytes());
        for id in self.all_param_ids() {
            let t = self.store.value(id);
            payload.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            payload.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(8 + payload.len() + 4);
        out.extend_from_slice(b"KLMW");
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        let path = dir.join("weights.bin");
        std::fs::write(&path, out).map_err(|e| KirsError::io(path, e))
    }

    /// Load a checkpoint directory produced by [`Self::save_checkpoint`].
    pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let weights_path = dir.join("weights.bin");
        if !weights_path.exists() {
            return Err(KirsError::MissingPrerequisite(format!(
                "backend checkpoint not found at {}",
                dir.display()
            )));
        }
        let vocab = Vocab::load(dir.join("vocab.txt"))?;
        let bytes = std::fs::read(&weights_path).map_err(|e| KirsError::io(&weights_path, e))?;
        if bytes.len() < 12 {
            return Err(StoreError::Header("weights file shorter than header".into()).into());
        }
        if &bytes[0..4] != b"KLMW" {
            return Err(StoreError::BadMagic {
                expected: *b"KLMW",
                found: bytes[0..4].try_into().unwrap(),
            }
            .into());
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != 1 {
            return Err(StoreError::Version {
                found: version,
                supported: 1,
            }
            .into());
        }
        let payload = &bytes[8..bytes.len() - 4];
        let expected = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let computed = crc32fast::hash(payload);
        if expected != computed {
            return Err(StoreError::Checksum { expected, computed }.into());
        }

        let mut r = Reader::new(payload);
        let hidden = r.u32().map_err(KirsError::from)? as usize;
        let layers = r.u32().map_err(KirsError::from)? as usize;
        let max_len = r.u32().map_err(KirsError::from)? as usize;
        let vocab_size = r.u32().map_err(KirsError::from)? as usize;
        let seed = r.u64().map_err(KirsError::from)?;
        if vocab_size != vocab.len() {
            return Err(StoreError::Header(format!(
                "weights expect a vocabulary of {vocab_size}, vocab.txt has {}",
                vocab.len()
            ))
            .into());
        }
        let config = BackendConfig {
            hidden,
            layers,
            max_len,
            seed,
        };
        let mut model = TinyTransformer::init(vocab, config);
        for (record, id) in model.all_param_ids().into_iter().enumerate() {
            let rows = r.u64().map_err(|_| StoreError::Truncated { record })? as usize;
            let cols = r.u64().map_err(|_| StoreError::Truncated { record })? as usize;
            let t = model.store.value_mut(id);
            if t.rows() != rows || t.cols() != cols {
                return Err(StoreError::Header(format!(
                    "tensor {record} has shape {rows}x{cols}, expected {}x{}",
                    t.rows(),
                    t.cols()
                ))
                .into());
            }
            for v in t.data_mut() {
                *v = f64::from_le_bytes(
                    r.take::<8>()
                        .map_err(|_| StoreError::Truncated { record })?,
                );
            }
        }
        Ok(model)
    }
}

impl LmBackend for TinyTransformer {
    fn hidden_size(&self) -> usize {
        self.config.hidden
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn bind(&self, tape: &mut Tape) -> BackendVars {
        let ids = self.all_param_ids();
        let mut bound = Vec::with_capacity(ids.len());
        let mut by_slot = Vec::with_capacity(ids.len());
        for id in ids {
            let var = tape.leaf(self.store.value(id).clone());
            bound.push((id, var));
            by_slot.push(var);
        }
        BackendVars { bound, by_slot }
    }

    fn encode(&self, tape: &mut Tape, vars: &BackendVars, tokens: &[u32]) -> Var {
        assert!(
            tokens.len() <= self.config.max_len,
            "sequence exceeds the backend maximum"
        );
        let slot = |id: ParamId| vars.var(id.index());
        let tok_emb = slot(self.tok_emb);
        let pos_emb = slot(self.pos_emb);
        let token_rows: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let tok = tape.rows(tok_emb, token_rows);
        let pos = tape.rows(pos_emb, (0..tokens.len()).collect());
        let mut x = tape.add(tok, pos);

        let scale = 1.0 / (self.config.hidden as f64).sqrt();
        for layer in &self.layers {
            let q = tape.matmul_nt(x, slot(layer.wq));
            let k = tape.matmul_nt(x, slot(layer.wk));
            let v = tape.matmul_nt(x, slot(layer.wv));
            let scores = tape.matmul_nt(q, k);
            let scaled = tape.scale(scores, scale);
            let attn = tape.row_softmax(scaled);
            let ctx = tape.matmul_nn(attn, v);
            let proj = tape.matmul_nt(ctx, slot(layer.wo));
            let res1 = tape.add(x, proj);
            let norm1 = tape.layer_norm_rows(res1, LN_EPS);

            let ff1 = tape.matmul_nt(norm1, slot(layer.ff1_w));
            let ff1b = tape.add_row_broadcast(ff1, slot(layer.ff1_b));
            let act = tape.relu(ff1b);
            let ff2 = tape.matmul_nt(act, slot(layer.ff2_w));
            let ff2b = tape.add_row_broadcast(ff2, slot(layer.ff2_b));
            let res2 = tape.add(norm1, ff2b);
            x = tape.layer_norm_rows(res2, LN_EPS);
        }
        x
    }

    fn logits(&self, tape: &mut Tape, vars: &BackendVars, hidden_rows: Var) -> Var {
        let w = vars.var(self.out_w.index());
        let b = vars.var(self.out_b.index());
        let z = tape.matmul_nt(hidden_rows, w);
        tape.add_row_broadcast(z, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::build_from_corpus(["alpha beta gamma", "delta", "eps"].into_iter(), 50)
    }

    fn tiny() -> TinyTransformer {
        TinyTransformer::init(
            vocab(),
            BackendConfig {
                hidden: 8,
                layers: 2,
                max_len: 16,
                seed: 3,
            },
        )
    }

    #[test]
    fn encode_produces_one_hidden_row_per_token() {
        let model = tiny();
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let tokens = [model.vocab.cls(), 7, 8, model.vocab.sep()];
        let h = model.encode(&mut tape, &vars, &tokens);
        assert_eq!(tape.value(h).rows(), 4);
        assert_eq!(tape.value(h).cols(), 8);
        let logits = model.logits(&mut tape, &vars, h);
        assert_eq!(tape.value(logits).rows(), 4);
        assert_eq!(tape.value(logits).cols(), model.vocab.len());
    }

    #[test]
    fn encoding_is_deterministic_for_fixed_weights() {
        let model = tiny();
        let tokens = [model.vocab.cls(), 5, 6, 9, model.vocab.sep()];
        let run = || {
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let h = model.encode(&mut tape, &vars, &tokens);
            tape.value(h).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn context_changes_token_representation() {
        // The same token id in different contexts must encode differently
        // (self-attention mixes the sequence).
        let model = tiny();
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let a = model.encode(&mut tape, &vars, &[model.vocab.cls(), 7, 8, model.vocab.sep()]);
        let b = model.encode(&mut tape, &vars, &[model.vocab.cls(), 7, 9, model.vocab.sep()]);
        let row_a = tape.value(a).row(1).to_vec();
        let row_b = tape.value(b).row(1).to_vec();
        let diff: f64 = row_a
            .iter()
            .zip(row_b.iter())
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-9);
    }

    #[test]
    fn checkpoint_round_trip_preserves_weights_and_vocab() {
        let model = tiny();
        let dir = tempfile::tempdir().unwrap();
        model.save_checkpoint(dir.path()).unwrap();
        let loaded = TinyTransformer::load_checkpoint(dir.path()).unwrap();
        assert_eq!(loaded.config(), model.config());
        for (a, b) in model
            .all_param_ids()
            .into_iter()
            .zip(loaded.all_param_ids())
        {
            assert_eq!(model.store.value(a), loaded.store.value(b));
        }
    }

    #[test]
    fn checkpoint_corruption_is_detected() {
        let model = tiny();
        let dir = tempfile::tempdir().unwrap();
        model.save_checkpoint(dir.path()).unwrap();
        let path = dir.path().join("weights.bin");
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xAA;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            TinyTransformer::load_checkpoint(dir.path()),
            Err(KirsError::Store(StoreError::Checksum { .. }))
        ));
    }

    #[test]
    fn missing_checkpoint_is_prerequisite_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            TinyTransformer::load_checkpoint(dir.path().join("nope")),
            Err(KirsError::MissingPrerequisite(_))
        ));
    }
}
