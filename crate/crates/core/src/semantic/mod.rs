//! Semantic representation learning: serialize triples into token
//! sequences, fine-tune a masked-LM backend under the joint margin + mask
//! objective, and export per-entity/per-relation semantic vectors together
//! with the learned relation hyperplanes.

pub mod backend;
pub mod sentence;
pub mod tokenizer;

pub use backend::{BackendConfig, BackendVars, LmBackend, TinyTransformer};
pub use sentence::{apply_masking, serialize_triple, TripleSentence};
pub use tokenizer::Vocab;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{unit_rows_init, ParamId, Tape, Var};
use crate::error::{KirsError, Result};
use crate::hyperplane::{corrupt_triple, draw_corrupt_mode};
use crate::infomax::EmbeddingTable;
use crate::kg_data::KnowledgeGraph;
use crate::trainer::AdamW;

/// Fine-tuning hyperparameters. The optimizer is Adam with decoupled
/// weight decay at learning rate 3e-5; one pass over the triples by
/// default.
#[derive(Clone, Debug)]
pub struct SemanticTrainConfig {
    pub backend: BackendConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub mask_rate: f64,
    /// Cap on whole-word vocabulary entries when building from the corpus.
    pub vocab_max_words: usize,
}

impl Default for SemanticTrainConfig {
    fn default() -> Self {
        SemanticTrainConfig {
            backend: BackendConfig::default(),
            epochs: 1,
            batch_size: 8,
            learning_rate: 3e-5,
            weight_decay: 0.01,
            mask_rate: 0.15,
            vocab_max_words: 30_000,
        }
    }
}

impl SemanticTrainConfig {
    pub fn tiny() -> Self {
        SemanticTrainConfig {
            backend: BackendConfig::tiny(),
            ..SemanticTrainConfig::default()
        }
    }
}

/// Mean of the backend output vectors over each component span.
pub fn pool_components(tape: &mut Tape, hidden: Var, s: &TripleSentence) -> (Var, Var, Var) {
    let pool = |tape: &mut Tape, span: (usize, usize)| {
        assert!(span.0 < span.1, "empty component span");
        tape.mean_rows(hidden, span.0, span.1)
    };
    (
        pool(tape, s.head_span),
        pool(tape, s.relation_span),
        pool(tape, s.tail_span),
    )
}

/// The connection-aware encoder: a masked-LM backend plus free relation
/// hyperplane parameters, trained jointly.
pub struct CBert<B: LmBackend> {
    pub backend: B,
    planes: ParamId,
    n_relations: usize,
}

impl CBert<TinyTransformer> {
    /// Build a fresh model over the graph's names with a corpus vocabulary.
    pub fn over_graph(graph: &KnowledgeGraph, config: &SemanticTrainConfig) -> Self {
        let names = graph
            .entity_names()
            .iter()
            .chain(graph.relation_names().iter())
            .map(|s| s.as_str());
        let vocab = Vocab::build_from_corpus(names, config.vocab_max_words);
        let backend = TinyTransformer::init(vocab, config.backend.clone());
        CBert::new(backend, graph.n_relations())
    }
}

impl<B: LmBackend> CBert<B> {
    pub fn new(mut backend: B, n_relations: usize) -> Self {
        let hidden = backend.hidden_size();
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0DE);
        let planes = backend.store_mut().insert_unit_rows(
            "relation_planes",
            unit_rows_init(&mut rng, n_relations, hidden),
        );
        CBert {
            backend,
            planes,
            n_relations,
        }
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    /// Serialize one triple with the backend's limits.
    pub fn serialize(&self, graph: &KnowledgeGraph, t: &crate::kg_data::Triple) -> Result<TripleSentence> {
        serialize_triple(
            t,
            (
                graph.entity_name(t.head),
                graph.relation_name(t.relation),
                graph.entity_name(t.tail),
            ),
            self.backend.vocab(),
            self.backend.max_len(),
        )
    }

    /// Hyperplane translation distance of pooled components under the
    /// sentence relation's plane.
    fn distance_from_hidden(
        &self,
        tape: &mut Tape,
        planes: Var,
        hidden: Var,
        s: &TripleSentence,
    ) -> Var {
        let (a_h, a_r, a_t) = pool_components(tape, hidden, s);
        let w = tape.row(planes, s.relation as usize);
        let sh = tape.dot(w, a_h);
        let sh_w = tape.smul(sh, w);
        let h_proj = tape.sub(a_h, sh_w);
        let st = tape.dot(w, a_t);
        let st_w = tape.smul(st, w);
        let t_proj = tape.sub(a_t, st_w);
        let translated = tape.add(h_proj, a_r);
        let diff = tape.sub(translated, t_proj);
        tape.l1_norm(diff)
    }

    /// Joint loss over a batch of (masked positive, corrupted negative)
    /// sentence pairs: L_c (margin over hyperplane distances), L_m (mean
    /// cross-entropy over all masked positions), L_g = L_c + L_m.
    pub fn semantic_loss_on_tape(
        &self,
        tape: &mut Tape,
        vars: &BackendVars,
        batch: &[(TripleSentence, TripleSentence)],
        gamma: f64,
    ) -> Result<SemanticLossVars> {
        if batch.is_empty() {
            return Err(KirsError::contract("semantic batch must be nonempty"));
        }
        let planes = vars
            .bound
            .iter()
            .find(|(id, _)| *id == self.planes)
            .map(|(_, v)| *v)
            .expect("planes bound with the backend");

        let mut margin_terms = Vec::with_capacity(batch.len());
        let mut mask_terms: Vec<(Var, usize)> = Vec::new();
        for (pos, neg) in batch {
            let hidden_pos = self.backend.encode(tape, vars, &pos.token_ids);
            let d_pos = self.distance_from_hidden(tape, planes, hidden_pos, pos);
            let hidden_neg = self.backend.encode(tape, vars, &neg.token_ids);
            let d_neg = self.distance_from_hidden(tape, planes, hidden_neg, neg);
            let gap = tape.sub(d_pos, d_neg);
            let gamma_leaf = tape.scalar(gamma);
            let shifted = tape.add(gap, gamma_leaf);
            margin_terms.push(tape.relu(shifted));

            if !pos.mask_positions.is_empty() {
                let rows = tape.rows(hidden_pos, pos.mask_positions.clone());
                let logits = self.backend.logits(tape, vars, rows);
                let targets: Vec<usize> = pos.mask_labels.iter().map(|&l| l as usize).collect();
                let n = targets.len();
                let ce = tape.mean_cross_entropy_rows(logits, targets);
                mask_terms.push((ce, n));
            }
        }

        let margin_total = tape.sum_nodes(margin_terms);
        let l_c = tape.scale(margin_total, 1.0 / batch.len() as f64);

        // Global mean over all masked positions: weight each per-sentence
        // mean by its mask count.
        let total_masks: usize = mask_terms.iter().map(|(_, n)| n).sum();
        let l_m = if total_masks == 0 {
            tape.scalar(0.0)
        } else {
            let weighted: Vec<Var> = mask_terms
                .iter()
                .map(|&(ce, n)| tape.scale(ce, n as f64 / total_masks as f64))
                .collect();
            tape.sum_nodes(weighted)
        };
        let l_g = tape.add(l_c, l_m);
        Ok(SemanticLossVars { l_c, l_m, l_g })
    }

    /// Scalar loss triple (L_c, L_m, L_g) for a prepared batch.
    pub fn semantic_loss(
        &self,
        batch: &[(TripleSentence, TripleSentence)],
        gamma: f64,
    ) -> Result<(f64, f64, f64)> {
        let mut tape = Tape::new();
        let vars = self.backend.bind(&mut tape);
        let losses = self.semantic_loss_on_tape(&mut tape, &vars, batch, gamma)?;
        Ok((
            tape.value(losses.l_c).item(),
            tape.value(losses.l_m).item(),
            tape.value(losses.l_g).item(),
        ))
    }

    /// One fine-tuning pass per epoch over shuffled triples: mask the
    /// positive, corrupt tail-or-relation for the negative, step AdamW.
    /// Returns the mean L_g per epoch.
    pub fn fine_tune(
        &mut self,
        graph: &KnowledgeGraph,
        config: &SemanticTrainConfig,
        gamma: f64,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let mut opt = AdamW::new(config.learning_rate, config.weight_decay);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..graph.triples().len()).collect();
        let mut history = Vec::with_capacity(config.epochs);
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(config.batch_size) {
                let mut batch = Vec::with_capacity(chunk.len());
                for &idx in chunk {
                    let t = &graph.triples()[idx];
                    let pos = self.serialize(graph, t)?;
                    let pos = apply_masking(&pos, config.mask_rate, self.backend.vocab(), &mut rng)?;
                    let mode = draw_corrupt_mode(&mut rng, false);
                    let neg_triple = match corrupt_triple(graph, t, mode, &mut rng) {
                        Ok(c) => c.triple,
                        Err(_) => {
                            corrupt_triple(
                                graph,
                                t,
                                crate::hyperplane::CorruptMode::Tail,
                                &mut rng,
                            )?
                            .triple
                        }
                    };
                    let neg = self.serialize(graph, &neg_triple)?;
                    batch.push((pos, neg));
                }
                let mut tape = Tape::new();
                let vars = self.backend.bind(&mut tape);
                let losses = self.semantic_loss_on_tape(&mut tape, &vars, &batch, gamma)?;
                epoch_loss += tape.value(losses.l_g).item();
                batches += 1;
                let grads = tape.backward(losses.l_g);
                opt.step(self.backend.store_mut(), &vars.bound, &grads)?;
            }
            history.push(epoch_loss / batches.max(1) as f64);
        }
        Ok(history)
    }

    /// Export per-entity/per-relation vectors: the mean of the pooled
    /// component vectors over every triple the id occurs in, computed in
    /// inference mode. Ids occurring in no triple get zeros with a warning.
    pub fn export_table(&self, graph: &KnowledgeGraph) -> Result<EmbeddingTable> {
        let dim = self.backend.hidden_size();
        let mut entity_sum = vec![vec![0.0f64; dim]; graph.n_entities()];
        let mut entity_count = vec![0usize; graph.n_entities()];
        let mut relation_sum = vec![vec![0.0f64; dim]; graph.n_relations()];
        let mut relation_count = vec![0usize; graph.n_relations()];

        for t in graph.triples() {
            let s = self.serialize(graph, t)?;
            let mut tape = Tape::new();
            let vars = self.backend.bind(&mut tape);
            let hidden = self.backend.encode(&mut tape, &vars, &s.token_ids);
            let (a_h, a_r, a_t) = pool_components(&mut tape, hidden, &s);
            accumulate(&mut entity_sum[t.head as usize], tape.value(a_h).data());
            entity_count[t.head as usize] += 1;
            accumulate(&mut relation_sum[t.relation as usize], tape.value(a_r).data());
            relation_count[t.relation as usize] += 1;
            accumulate(&mut entity_sum[t.tail as usize], tape.value(a_t).data());
            entity_count[t.tail as usize] += 1;
        }

        let mut unseen = 0usize;
        let entity_vectors = entity_sum
            .into_iter()
            .zip(entity_count.iter())
            .map(|(mut v, &n)| {
                if n == 0 {
                    unseen += 1;
                } else {
                    for x in v.iter_mut() {
                        *x /= n as f64;
                    }
                }
                v
            })
            .collect();
        if unseen > 0 {
            warn!("{unseen} entities occur in no triple; exporting zero vectors");
        }
        let relation_vectors = relation_sum
            .into_iter()
            .zip(relation_count.iter())
            .map(|(mut v, &n)| {
                if n > 0 {
                    for x in v.iter_mut() {
                        *x /= n as f64;
                    }
                }
                v
            })
            .collect();

        let plane_values = self.backend.store().value(self.planes);
        let relation_planes = (0..graph.n_relations())
            .map(|r| plane_values.row(r).to_vec())
            .collect();

        Ok(EmbeddingTable {
            dim,
            entity_vectors,
            relation_vectors,
            relation_planes: Some(relation_planes),
        })
    }
}

/// Loss nodes of one semantic batch.
pub struct SemanticLossVars {
    pub l_c: Var,
    pub l_m: Var,
    pub l_g: Var,
}

fn accumulate(sum: &mut [f64], add: &[f64]) {
    for (a, b) in sum.iter_mut().zip(add.iter()) {
        *a += b;
    }
}

/// A trivial deterministic backend for contract tests: "encodes" a token
/// sequence as fixed per-token embedding rows (no mixing) and reuses the
/// embedding matrix as the vocabulary head.
#[cfg(test)]
pub(crate) struct LookupBackend {
    store: crate::autodiff::ParamStore,
    emb: ParamId,
    vocab: Vocab,
    hidden: usize,
}

#[cfg(test)]
impl LookupBackend {
    pub(crate) fn new(vocab: Vocab, hidden: usize, seed: u64) -> Self {
        let mut store = crate::autodiff::ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = store.insert(
            "lookup_emb",
            crate::autodiff::uniform_init(&mut rng, vocab.len(), hidden, 0.5),
        );
        LookupBackend {
            store,
            emb,
            vocab,
            hidden,
        }
    }
}

#[cfg(test)]
impl LmBackend for LookupBackend {
    fn hidden_size(&self) -> usize {
        self.hidden
    }
    fn max_len(&self) -> usize {
        64
    }
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }
    fn store(&self) -> &crate::autodiff::ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut crate::autodiff::ParamStore {
        &mut self.store
    }
    fn bind(&self, tape: &mut Tape) -> BackendVars {
        let mut bound = Vec::new();
        let mut by_slot = Vec::new();
        for id in self.store.ids() {
            let var = tape.leaf(self.store.value(id).clone());
            bound.push((id, var));
            by_slot.push(var);
        }
        BackendVars { bound, by_slot }
    }
    fn encode(&self, tape: &mut Tape, vars: &BackendVars, tokens: &[u32]) -> Var {
        let emb = vars.bound[self.emb.index()].1;
        tape.rows(emb, tokens.iter().map(|&t| t as usize).collect())
    }
    fn logits(&self, tape: &mut Tape, vars: &BackendVars, hidden_rows: Var) -> Var {
        let emb = vars.bound[self.emb.index()].1;
        tape.matmul_nt(hidden_rows, emb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::kg_data::Triple;

    fn chain_graph(n: usize) -> KnowledgeGraph {
        // e0 -r- e1 -r- e2 … plus a second relation back-linking.
        let entities: Vec<String> = (0..n).map(|i| format!("entity {i}")).collect();
        let relations = vec!["links to".to_string(), "made by".to_string()];
        let mut triples = Vec::new();
        for i in 0..n - 1 {
            triples.push(Triple::new(i as u32, (i % 2) as u32, (i + 1) as u32));
        }
        KnowledgeGraph::from_parts(entities, relations, triples)
    }

    fn tiny_cbert(graph: &KnowledgeGraph) -> CBert<TinyTransformer> {
        let config = SemanticTrainConfig {
            backend: BackendConfig {
                hidden: 16,
                layers: 1,
                max_len: 32,
                seed: 1,
            },
            ..SemanticTrainConfig::tiny()
        };
        CBert::over_graph(graph, &config)
    }

    #[test]
    fn pooling_width_one_is_identity_and_two_is_mean() {
        let mut tape = Tape::new();
        let hidden = tape.leaf(Tensor::from_rows(
            4,
            2,
            vec![9.0, 9.0, 1.0, 2.0, 3.0, -2.0, 9.0, 9.0],
        ));
        let s = TripleSentence {
            token_ids: vec![0; 4],
            head_span: (1, 2),
            relation_span: (2, 3),
            tail_span: (1, 3),
            mask_positions: vec![],
            mask_labels: vec![],
            head: 0,
            relation: 0,
            tail: 0,
        };
        let (a_h, a_r, a_t) = pool_components(&mut tape, hidden, &s);
        assert_eq!(tape.value(a_h).data(), &[1.0, 2.0]);
        assert_eq!(tape.value(a_r).data(), &[3.0, -2.0]);
        // Mean of rows 1..3: ((1,2)+(3,−2))/2 = (2, 0).
        assert_eq!(tape.value(a_t).data(), &[2.0, 0.0]);
    }

    #[test]
    fn pooling_cancellation_gives_zero() {
        let mut tape = Tape::new();
        let hidden = tape.leaf(Tensor::from_rows(2, 3, vec![1.0, -2.0, 0.5, -1.0, 2.0, -0.5]));
        let s = TripleSentence {
            token_ids: vec![0; 2],
            head_span: (0, 2),
            relation_span: (0, 1),
            tail_span: (1, 2),
            mask_positions: vec![],
            mask_labels: vec![],
            head: 0,
            relation: 0,
            tail: 0,
        };
        let (a_h, _, _) = pool_components(&mut tape, hidden, &s);
        assert!(tape.value(a_h).data().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn tied_distances_with_no_masks_give_lg_equal_gamma() {
        let graph = chain_graph(4);
        let model = tiny_cbert(&graph);
        let s = model.serialize(&graph, &graph.triples()[0]).unwrap();
        // Positive == negative sentence → distances tie → L_c = γ.
        let batch = vec![(s.clone(), s.clone())];
        let (l_c, l_m, l_g) = model.semantic_loss(&batch, 1.0).unwrap();
        assert!((l_c - 1.0).abs() < 1e-9);
        assert_eq!(l_m, 0.0);
        assert!((l_g - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_mask_predictor_gives_ln_vocab() {
        // A backend whose logits are all equal predicts uniformly, so the
        // masked cross-entropy is ln V exactly.
        let vocab = Vocab::build_from_corpus(["alpha beta", "gamma"].into_iter(), 10);
        let v_size = vocab.len();
        let mut backend = LookupBackend::new(vocab, 4, 2);
        // Zero embeddings → logits all zero → uniform distribution.
        let id = backend.emb;
        *backend.store.value_mut(id) = Tensor::zeros(v_size, 4);
        let model = CBert::new(backend, 1);

        let graph = KnowledgeGraph::from_parts(
            vec!["alpha".into(), "beta".into()],
            vec!["gamma".into()],
            vec![Triple::new(0, 0, 1)],
        );
        let mut s = model.serialize(&graph, &graph.triples()[0]).unwrap();
        s.mask_positions = vec![1, 2];
        s.mask_labels = vec![s.token_ids[1], s.token_ids[2]];
        let neg = model.serialize(&graph, &Triple::new(1, 0, 0)).unwrap();
        let (_, l_m, _) = model.semantic_loss(&[(s, neg)], 1.0).unwrap();
        assert!((l_m - (v_size as f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn mask_loss_matches_independent_scalar_loop() {
        let graph = chain_graph(5);
        let model = tiny_cbert(&graph);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = &graph.triples()[1];
        let s = model.serialize(&graph, t).unwrap();
        let s = apply_masking(&s, 0.5, model.backend.vocab(), &mut rng).unwrap();
        if s.mask_positions.is_empty() {
            return;
        }
        let neg = model.serialize(&graph, &graph.triples()[2]).unwrap();
        let (_, l_m, _) = model.semantic_loss(&[(s.clone(), neg)], 1.0).unwrap();

        // Independent route: softmax over logits per masked row, scalar loop.
        let mut tape = Tape::new();
        let vars = model.backend.bind(&mut tape);
        let hidden = model.backend.encode(&mut tape, &vars, &s.token_ids);
        let rows = tape.rows(hidden, s.mask_positions.clone());
        let logits_var = model.backend.logits(&mut tape, &vars, rows);
        let logits = tape.value(logits_var).clone();
        let mut total = 0.0;
        for (row, &label) in s.mask_labels.iter().enumerate().map(|(i, l)| (i, l)) {
            let r = logits.row(row);
            let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = r.iter().map(|x| (x - max).exp()).sum();
            let p = (r[label as usize] - max).exp() / z;
            total -= p.ln();
        }
        let reference = total / s.mask_positions.len() as f64;
        assert!((l_m - reference).abs() < 1e-6, "{l_m} vs {reference}");
    }

    #[test]
    fn loss_decreases_over_fine_tuning_steps() {
        let graph = chain_graph(8);
        let mut model = tiny_cbert(&graph);
        let config = SemanticTrainConfig {
            backend: model.backend.config().clone(),
            epochs: 12,
            batch_size: 4,
            learning_rate: 3e-4,
            ..SemanticTrainConfig::tiny()
        };
        let history = model.fine_tune(&graph, &config, 1.0, 33).unwrap();
        let first = history.first().copied().unwrap();
        let last = history.last().copied().unwrap();
        assert!(
            last < first,
            "loss should decrease: first {first}, last {last}"
        );
    }

    #[test]
    fn export_entity_mean_and_shape() {
        let graph = chain_graph(4);
        let model = tiny_cbert(&graph);
        let table = model.export_table(&graph).unwrap();
        assert_eq!(table.entity_vectors.len(), 4);
        assert_eq!(table.relation_vectors.len(), 2);
        assert_eq!(table.dim, 16);
        let planes = table.relation_planes.as_ref().unwrap();
        for p in planes {
            let norm: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }

        // Entity 1 occurs in two triples (as tail of t0, head of t1);
        // its export is the mean of those two pooled vectors.
        let s0 = model.serialize(&graph, &graph.triples()[0]).unwrap();
        let s1 = model.serialize(&graph, &graph.triples()[1]).unwrap();
        let pooled = |s: &TripleSentence, which: usize| -> Vec<f64> {
            let mut tape = Tape::new();
            let vars = model.backend.bind(&mut tape);
            let hidden = model.backend.encode(&mut tape, &vars, &s.token_ids);
            let (a_h, _, a_t) = pool_components(&mut tape, hidden, s);
            let v = if which == 0 { a_h } else { a_t };
            tape.value(v).data().to_vec()
        };
        let tail_of_0 = pooled(&s0, 1);
        let head_of_1 = pooled(&s1, 0);
        for (k, &exported) in table.entity_vectors[1].iter().enumerate() {
            let expect = (tail_of_0[k] + head_of_1[k]) / 2.0;
            assert!((exported - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn export_is_deterministic_with_frozen_backend() {
        let graph = chain_graph(4);
        let model = tiny_cbert(&graph);
        let a = model.export_table(&graph).unwrap();
        let b = model.export_table(&graph).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn export_isolated_entity_gets_zero_vector() {
        let graph = KnowledgeGraph::from_parts(
            vec!["a".into(), "b".into(), "isolated".into()],
            vec!["r".into()],
            vec![Triple::new(0, 0, 1)],
        );
        let model = tiny_cbert(&graph);
        let table = model.export_table(&graph).unwrap();
        assert!(table.entity_vectors[2].iter().all(|&v| v == 0.0));
        assert!(table.entity_vectors[0].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn semantic_gradient_matches_finite_differences() {
        use crate::autodiff::check_gradients;
        // Small lookup backend keeps the parameter count manageable.
        let vocab = Vocab::build_from_corpus(["aa bb", "cc", "dd ee"].into_iter(), 20);
        let backend = LookupBackend::new(vocab, 5, 7);
        let model = CBert::new(backend, 2);
        let graph = KnowledgeGraph::from_parts(
            vec!["aa".into(), "bb".into(), "cc".into()],
            vec!["dd".into(), "ee".into()],
            vec![Triple::new(0, 0, 1), Triple::new(1, 1, 2)],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pos = model.serialize(&graph, &graph.triples()[0]).unwrap();
        let pos = apply_masking(&pos, 0.4, model.backend.vocab(), &mut rng).unwrap();
        let neg = model.serialize(&graph, &Triple::new(0, 1, 2)).unwrap();
        let batch = vec![(pos, neg)];

        let ids: Vec<ParamId> = model.backend.store().ids().collect();
        let inputs: Vec<Tensor> = ids
            .iter()
            .map(|&id| model.backend.store().value(id).clone())
            .collect();
        check_gradients(&inputs, 1e-6, 1e-4, 1e-8, |tape, ins| {
            let mut bound = Vec::new();
            let mut by_slot = Vec::new();
            for (i, t) in ins.iter().enumerate() {
                let var = tape.leaf(t.clone());
                bound.push((ids[i], var));
                by_slot.push(var);
            }
            let vars = BackendVars { bound, by_slot };
            let losses = model
                .semantic_loss_on_tape(tape, &vars, &batch, 1.0)
                .unwrap();
            let loss_vars: Vec<Var> = vars.bound.iter().map(|(_, v)| *v).collect();
            (losses.l_g, loss_vars)
        })
        .unwrap();
    }
}
