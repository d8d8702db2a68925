//! Composition-based multi-relational graph convolution over the
//! reversal-augmented KG, trained with a triple-classification objective,
//! exporting the structural half of the Infomax representation.

use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{
    glorot_init, uniform_init, NeighborIndex, ParamId, ParamStore, Tape, Tensor, Var,
};
use crate::error::{KirsError, Result};
use crate::hyperplane::{corrupt_triple, draw_corrupt_mode};
use crate::infomax::EmbeddingTable;
use crate::kg_data::{KnowledgeGraph, Triple};

/// The original KG plus, for each triple, a reversed copy under a distinct
/// inverse-relation id (`inv(r) = r + R`).
pub struct AugmentedGraph {
    pub n_entities: usize,
    /// Original relation count; the augmented graph uses `2 * n_relations`.
    pub n_relations: usize,
    pub triples: Vec<Triple>,
    /// Entity → list of (neighbor entity, relation) over the augmented graph.
    pub neighbor_index: Rc<NeighborIndex>,
}

/// Swap head and tail of every triple under a fresh inverse relation id.
pub fn augment_graph(graph: &KnowledgeGraph) -> Result<AugmentedGraph> {
    if graph.triples().is_empty() {
        return Err(KirsError::Domain("cannot augment an empty KG".into()));
    }
    let n_relations = graph.n_relations();
    let mut triples = Vec::with_capacity(graph.triples().len() * 2);
    let mut neighbor_index: NeighborIndex = vec![Vec::new(); graph.n_entities()];
    for t in graph.triples() {
        triples.push(t.clone());
        neighbor_index[t.head as usize].push((t.tail, t.relation));
        let inv = Triple::new(t.tail, t.relation + n_relations as u32, t.head);
        neighbor_index[inv.head as usize].push((inv.tail, inv.relation));
        triples.push(inv);
    }
    Ok(AugmentedGraph {
        n_entities: graph.n_entities(),
        n_relations,
        triples,
        neighbor_index: Rc::new(neighbor_index),
    })
}

/// Layer count and widths of the convolution stack.
#[derive(Clone, Debug)]
pub struct GcnConfig {
    pub dim: usize,
    pub layers: usize,
    pub negatives_per_positive: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig {
            dim: 200,
            layers: 2,
            negatives_per_positive: 1,
            learning_rate: 0.005,
            l2: 1e-5,
            batch_size: 1024,
            epochs: 10,
            seed: 0,
        }
    }
}

impl GcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(KirsError::Config(
                "graph convolution needs at least 1 layer".into(),
            ));
        }
        if self.dim == 0 || self.batch_size == 0 {
            return Err(KirsError::Config("dim and batch size must be > 0".into()));
        }
        Ok(())
    }
}

/// Trainable CompGCN parameters: layer-0 embeddings, the three per-layer
/// transforms, and the two-layer sigmoid classifier.
pub struct GcnModel {
    pub store: ParamStore,
    ent0: ParamId,
    rel0: ParamId,
    w1: Vec<ParamId>,
    w2: Vec<ParamId>,
    w3: Vec<ParamId>,
    cls_w1: ParamId,
    cls_b1: ParamId,
    cls_w2: ParamId,
    cls_b2: ParamId,
    dim: usize,
    layers: usize,
}

impl GcnModel {
    pub fn init(aug: &AugmentedGraph, config: &GcnConfig) -> Result<Self> {
        config.validate()?;
        let dim = config.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let mut store = ParamStore::new();
        let ent0 = store.insert(
            "gcn_ent0",
            uniform_init(&mut rng, aug.n_entities, dim, scale),
        );
        // Inverse relations get their own layer-0 embeddings.
        let rel0 = store.insert(
            "gcn_rel0",
            uniform_init(&mut rng, aug.n_relations * 2, dim, scale),
        );
        let mut w1 = Vec::new();
        let mut w2 = Vec::new();
        let mut w3 = Vec::new();
        for l in 0..config.layers {
            w1.push(store.insert(&format!("gcn_w1_{l}"), glorot_init(&mut rng, dim, dim)));
            w2.push(store.insert(&format!("gcn_w2_{l}"), glorot_init(&mut rng, dim, dim)));
            w3.push(store.insert(&format!("gcn_w3_{l}"), glorot_init(&mut rng, dim, dim)));
        }
        let cls_w1 = store.insert("gcn_cls_w1", glorot_init(&mut rng, dim, 3 * dim));
        let cls_b1 = store.insert("gcn_cls_b1", Tensor::zeros(1, dim));
        let cls_w2 = store.insert("gcn_cls_w2", glorot_init(&mut rng, 1, dim));
        let cls_b2 = store.insert("gcn_cls_b2", Tensor::zeros(1, 1));
        Ok(GcnModel {
            store,
            ent0,
            rel0,
            w1,
            w2,
            w3,
            cls_w1,
            cls_b1,
            cls_w2,
            cls_b2,
            dim,
            layers: config.layers,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.store.ids().collect()
    }

    /// Full propagation stack on the tape; returns final entity/relation
    /// matrices plus the bound parameter vars for the optimizer.
    pub fn propagate_on_tape(&self, tape: &mut Tape, aug: &AugmentedGraph) -> GcnVars {
        let mut bound = Vec::new();
        let mut bind = |tape: &mut Tape, id: ParamId, store: &ParamStore| -> Var {
            let v = tape.leaf(store.value(id).clone());
            bound.push((id, v));
            v
        };
        let ent0 = bind(tape, self.ent0, &self.store);
        let rel0 = bind(tape, self.rel0, &self.store);
        let mut entities = ent0;
        let mut relations = rel0;
        for l in 0..self.layers {
            let w1 = bind(tape, self.w1[l], &self.store);
            let w2 = bind(tape, self.w2[l], &self.store);
            let w3 = bind(tape, self.w3[l], &self.store);
            let agg = tape.gcn_neighbor_sum(entities, relations, aug.neighbor_index.clone());
            let agg_t = tape.matmul_nt(agg, w1);
            let self_t = tape.matmul_nt(entities, w2);
            let summed = tape.add(agg_t, self_t);
            entities = tape.relu(summed);
            relations = tape.matmul_nt(relations, w3);
        }
        let cls_w1 = bind(tape, self.cls_w1, &self.store);
        let cls_b1 = bind(tape, self.cls_b1, &self.store);
        let cls_w2 = bind(tape, self.cls_w2, &self.store);
        let cls_b2 = bind(tape, self.cls_b2, &self.store);
        GcnVars {
            entities,
            relations,
            cls_w1,
            cls_b1,
            cls_w2,
            cls_b2,
            bound,
        }
    }

    /// Classifier logit for one triple over propagated embeddings.
    fn triple_logit(&self, tape: &mut Tape, vars: &GcnVars, t: &Triple) -> Var {
        let h = tape.row(vars.entities, t.head as usize);
        let r = tape.row(vars.relations, t.relation as usize);
        let tl = tape.row(vars.entities, t.tail as usize);
        let x = tape.concat_vecs(vec![h, r, tl]);
        let z1 = tape.matvec(vars.cls_w1, x);
        let z1b = tape.add(z1, vars.cls_b1);
        let hid = tape.relu(z1b);
        let z2 = tape.matvec(vars.cls_w2, hid);
        tape.add(z2, vars.cls_b2)
    }

    /// Binary cross-entropy over positive triples (label 1) and corrupted
    /// negatives (label 0), mean over the union.
    pub fn structural_loss_on_tape(
        &self,
        tape: &mut Tape,
        vars: &GcnVars,
        graph: &KnowledgeGraph,
        positives: &[Triple],
        negatives_per_positive: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let mut terms = Vec::new();
        for t in positives {
            let logit = self.triple_logit(tape, vars, t);
            terms.push(tape.sigmoid_bce(logit, 1.0));
            for _ in 0..negatives_per_positive {
                let mode = draw_corrupt_mode(rng, false);
                let corrupted = match corrupt_triple(graph, t, mode, rng) {
                    Ok(c) => c.triple,
                    // A graph with a single relation cannot corrupt it;
                    // fall back to tail corruption.
                    Err(_) => {
                        corrupt_triple(graph, t, crate::hyperplane::CorruptMode::Tail, rng)?.triple
                    }
                };
                let logit = self.triple_logit(tape, vars, &corrupted);
                terms.push(tape.sigmoid_bce(logit, 0.0));
            }
        }
        let n = terms.len() as f64;
        let total = tape.sum_nodes(terms);
        Ok(tape.scale(total, 1.0 / n))
    }

    /// Propagated embeddings as plain tensors (inference).
    pub fn propagate(&self, aug: &AugmentedGraph) -> (Tensor, Tensor) {
        let mut tape = Tape::new();
        let vars = self.propagate_on_tape(&mut tape, aug);
        (
            tape.value(vars.entities).clone(),
            tape.value(vars.relations).clone(),
        )
    }

    /// Classifier probability for a triple over precomputed embeddings.
    pub fn score_triple(&self, entities: &Tensor, relations: &Tensor, t: &Triple) -> f64 {
        let mut x = Vec::with_capacity(3 * self.dim);
        x.extend_from_slice(entities.row(t.head as usize));
        x.extend_from_slice(relations.row(t.relation as usize));
        x.extend_from_slice(entities.row(t.tail as usize));
        let w1 = self.store.value(self.cls_w1);
        let b1 = self.store.value(self.cls_b1);
        let w2 = self.store.value(self.cls_w2);
        let b2 = self.store.value(self.cls_b2);
        let mut hid = vec![0.0; self.dim];
        for (j, h) in hid.iter_mut().enumerate() {
            let z: f64 =
                w1.row(j).iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() + b1.data()[j];
            *h = z.max(0.0);
        }
        let z: f64 = w2
            .row(0)
            .iter()
            .zip(hid.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + b2.data()[0];
        1.0 / (1.0 + (-z).exp())
    }

    /// Final-layer vectors for the original relation ids only.
    pub fn export_table(&self, aug: &AugmentedGraph) -> EmbeddingTable {
        let (entities, relations) = self.propagate(aug);
        EmbeddingTable {
            dim: self.dim,
            entity_vectors: (0..aug.n_entities)
                .map(|e| entities.row(e).to_vec())
                .collect(),
            relation_vectors: (0..aug.n_relations)
                .map(|r| relations.row(r).to_vec())
                .collect(),
            relation_planes: None,
        }
    }
}

/// Tape bindings of one propagation pass.
pub struct GcnVars {
    pub entities: Var,
    pub relations: Var,
    cls_w1: Var,
    cls_b1: Var,
    cls_w2: Var,
    cls_b2: Var,
    /// (param id, bound var) pairs for the optimizer.
    pub bound: Vec<(ParamId, Var)>,
}

/// One convolution step over explicit matrices:
/// `e'_h = ReLU(Σ_{(t,r)∈N_h} W₁(e_t − e_r) + W₂ e_h)`, `e'_r = W₃ e_r`.
/// Isolated entities keep only the self term.
pub fn propagate_layer(
    neighbor_index: &NeighborIndex,
    entities: &Tensor,
    relations: &Tensor,
    w1: &Tensor,
    w2: &Tensor,
    w3: &Tensor,
) -> (Tensor, Tensor) {
    let mut tape = Tape::new();
    let e = tape.leaf(entities.clone());
    let r = tape.leaf(relations.clone());
    let w1v = tape.leaf(w1.clone());
    let w2v = tape.leaf(w2.clone());
    let w3v = tape.leaf(w3.clone());
    let agg = tape.gcn_neighbor_sum(e, r, Rc::new(neighbor_index.clone()));
    let agg_t = tape.matmul_nt(agg, w1v);
    let self_t = tape.matmul_nt(e, w2v);
    let summed = tape.add(agg_t, self_t);
    let e_next = tape.relu(summed);
    let r_next = tape.matmul_nt(r, w3v);
    (tape.value(e_next).clone(), tape.value(r_next).clone())
}

/// Per-epoch training diagnostics.
#[derive(Clone, Debug)]
pub struct StructuralEpoch {
    pub epoch: usize,
    pub loss: f64,
}

/// Train the convolution stack with Adagrad and export the structural table.
pub fn train_structural(
    graph: &KnowledgeGraph,
    config: &GcnConfig,
) -> Result<(EmbeddingTable, Vec<StructuralEpoch>)> {
    let aug = augment_graph(graph)?;
    let mut model = GcnModel::init(&aug, config)?;
    let mut opt = crate::trainer::Adagrad::new(config.learning_rate, config.l2);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));

    let mut order: Vec<usize> = (0..graph.triples().len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let positives: Vec<Triple> =
                chunk.iter().map(|&i| graph.triples()[i].clone()).collect();
            let mut tape = Tape::new();
            let vars = model.propagate_on_tape(&mut tape, &aug);
            let loss = model.structural_loss_on_tape(
                &mut tape,
                &vars,
                graph,
                &positives,
                config.negatives_per_positive,
                &mut rng,
            )?;
            epoch_loss += tape.value(loss).item();
            batches += 1;
            let grads = tape.backward(loss);
            opt.step(&mut model.store, &vars.bound, &grads)?;
        }
        history.push(StructuralEpoch {
            epoch: epoch + 1,
            loss: epoch_loss / batches.max(1) as f64,
        });
    }
    Ok((model.export_table(&aug), history))
}

/// Mean rank of the true tail over all entities by descending classifier
/// probability (ties split by candidate id). Used by the learning-sanity
/// checks.
pub fn mean_rank_of_tails(model: &GcnModel, aug: &AugmentedGraph, held_out: &[Triple]) -> f64 {
    let (entities, relations) = model.propagate(aug);
    let mut total = 0usize;
    for t in held_out {
        let true_score = model.score_triple(&entities, &relations, t);
        let mut better = 0usize;
        for candidate in 0..aug.n_entities as u32 {
            if candidate == t.tail {
                continue;
            }
            let c = Triple::new(t.head, t.relation, candidate);
            let s = model.score_triple(&entities, &relations, &c);
            if s > true_score || (s == true_score && candidate < t.tail) {
                better += 1;
            }
        }
        total += better + 1;
    }
    total as f64 / held_out.len() as f64
}
