//! End-to-end schedule: (1) semantic pretraining, (2) structural
//! pretraining, (3) Infomax assembly and persistence, (4) contrastive
//! warm-up for X_w epochs, (5) the one-shot augmentation update, (6) main
//! BPR training with validation-based early stopping.
//!
//! Ablation flags skip stages and substitute zero vectors; stage order is
//! recorded in the report and is externally checkable.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor};
use crate::contrastive::{infonce_on_tape, ContrastiveEncoder};
use crate::error::{KirsError, Result};
use crate::eval::aggregate;
use crate::infomax::{EmbeddingTable, InfomaxStore, LookupKind};
use crate::kg_data::{InteractionLog, KnowledgeGraph, Split};
use crate::preference::{Checkpoint, PreferenceState};
use crate::semantic::{CBert, TinyTransformer};
use crate::structural::train_structural;

use super::{Adagrad, EpochRow, StageKind, TrainConfig, TrainReport};

/// Inputs of one pipeline run.
pub struct PipelineData<'a> {
    /// Interaction log, already split into train/valid/test.
    pub log: &'a InteractionLog,
    pub graph: &'a KnowledgeGraph,
    /// Artifacts (store, checkpoints, report) are persisted here when set.
    pub out_dir: Option<&'a Path>,
    /// Load this backend checkpoint instead of initializing randomly.
    pub backend_checkpoint: Option<&'a Path>,
    /// Reuse a previously persisted Infomax store when present in
    /// `out_dir`, skipping the two pretraining stages.
    pub resume: bool,
}

impl<'a> PipelineData<'a> {
    pub fn new(log: &'a InteractionLog, graph: &'a KnowledgeGraph) -> Self {
        PipelineData {
            log,
            graph,
            out_dir: None,
            backend_checkpoint: None,
            resume: false,
        }
    }
}

/// Results of one run.
pub struct PipelineOutput {
    pub state: PreferenceState,
    pub store: InfomaxStore,
    pub report: TrainReport,
}

fn zero_table(dim: usize, n_entities: usize, n_relations: usize) -> EmbeddingTable {
    EmbeddingTable {
        dim,
        entity_vectors: vec![vec![0.0; dim]; n_entities],
        relation_vectors: vec![vec![0.0; dim]; n_relations],
        relation_planes: Some(vec![vec![0.0; dim]; n_relations]),
    }
}

fn store_path(out_dir: Option<&Path>) -> Option<PathBuf> {
    out_dir.map(|d| d.join("infomax.kirs"))
}

/// Execute the full schedule and return the trained state, the Infomax
/// store, and the per-epoch report.
pub fn run_pipeline(config: &TrainConfig, data: &PipelineData) -> Result<PipelineOutput> {
    config.validate()?;
    let started = Instant::now();
    let flags = config.ablation;
    let graph = data.graph;
    let log = data.log;
    let mut report = TrainReport::default();

    // Stages 1-3: pretraining and Infomax assembly.
    let store = if flags.uses_infomax() {
        let resumable = store_path(data.out_dir).filter(|p| data.resume && p.exists());
        if let Some(path) = resumable {
            info!("resuming from persisted Infomax store at {}", path.display());
            report.stages.push(StageKind::BuildInfomax);
            InfomaxStore::load(&path)?
        } else {
            let semantic_table = if flags.use_semantic {
                report.stages.push(StageKind::PretrainSemantic);
                let mut model = match data.backend_checkpoint {
                    Some(dir) => {
                        let backend = TinyTransformer::load_checkpoint(dir)
                            .map_err(|e| e.in_stage(StageKind::PretrainSemantic.name()))?;
                        CBert::new(backend, graph.n_relations())
                    }
                    None => CBert::over_graph(graph, &config.semantic),
                };
                if flags.use_finetuned_lm {
                    let history = model
                        .fine_tune(graph, &config.semantic, config.margin, config.seed)
                        .map_err(|e| e.in_stage(StageKind::PretrainSemantic.name()))?;
                    for (epoch, loss) in history.iter().enumerate() {
                        report.epochs.push(EpochRow {
                            stage: StageKind::PretrainSemantic,
                            epoch: epoch + 1,
                            loss_g: Some(*loss),
                            loss_com: None,
                            loss_w: None,
                            loss_r: None,
                            val_precision: None,
                        });
                    }
                }
                if let Some(dir) = data.out_dir {
                    model.backend.save_checkpoint(dir.join("backend"))?;
                }
                model
                    .export_table(graph)
                    .map_err(|e| e.in_stage(StageKind::PretrainSemantic.name()))?
            } else {
                zero_table(
                    config.semantic.backend.hidden,
                    graph.n_entities(),
                    graph.n_relations(),
                )
            };

            let structural_table = if flags.use_structural {
                report.stages.push(StageKind::PretrainStructural);
                let (table, history) = train_structural(graph, &config.structural)
                    .map_err(|e| e.in_stage(StageKind::PretrainStructural.name()))?;
                for row in &history {
                    report.epochs.push(EpochRow {
                        stage: StageKind::PretrainStructural,
                        epoch: row.epoch,
                        loss_g: None,
                        loss_com: Some(row.loss),
                        loss_w: None,
                        loss_r: None,
                        val_precision: None,
                    });
                }
                table
            } else {
                zero_table(
                    config.structural.dim,
                    graph.n_entities(),
                    graph.n_relations(),
                )
            };

            report.stages.push(StageKind::BuildInfomax);
            let store = InfomaxStore::build(
                Some(&structural_table),
                Some(&semantic_table),
                graph.n_entities(),
                graph.n_relations(),
            )
            .map_err(|e| e.in_stage(StageKind::BuildInfomax.name()))?;
            if let Some(path) = store_path(data.out_dir) {
                store.save(&path)?;
            }
            store
        }
    } else {
        InfomaxStore::empty(
            config.structural.dim as u32,
            config.semantic.backend.hidden as u32,
        )
    };

    // The recommender over the concatenated dimension.
    let dim = config.embedding_dim();
    let pref_to_relation: Vec<u32> = (0..graph.n_relations() as u32).collect();
    let mut state = PreferenceState::init(
        log.n_users(),
        log.n_items(),
        pref_to_relation,
        dim,
        config.seed,
    );

    let train_pairs: Vec<(u32, u32)> = log
        .records()
        .iter()
        .filter(|r| r.split == Split::Train)
        .map(|r| (r.user, r.item))
        .collect();
    if train_pairs.is_empty() {
        return Err(KirsError::Domain("no training interactions".into()));
    }

    let mut optimizer = Adagrad::new(config.learning_rate, config.l2);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0xA11CE));
    let mut val_history: Vec<f64> = Vec::new();
    let mut epochs_done = 0usize;

    // Stage 4: contrastive warm-up.
    if flags.use_contrastive {
        report.stages.push(StageKind::WarmUp);
        let encoder = ContrastiveEncoder::init(
            state.params_mut(),
            store.total_dim().max(1),
            dim,
            config.seed.wrapping_add(7),
        );

        for _ in 1..=config.warmup_epochs.min(config.max_epochs) {
            let (loss_w, loss_r) = warmup_epoch(
                config,
                &mut state,
                &encoder,
                &store,
                log,
                &train_pairs,
                &mut optimizer,
                &mut rng,
            )?;
            epochs_done += 1;
            let precision = validation_precision(&state, log, config.eval_k);
            val_history.push(precision.unwrap_or(0.0));
            report.epochs.push(EpochRow {
                stage: StageKind::WarmUp,
                epoch: epochs_done,
                loss_g: None,
                loss_com: None,
                loss_w: Some(loss_w),
                loss_r: Some(loss_r),
                val_precision: precision,
            });
        }
    }

    // Stage 5: the one-shot augmentation update.
    if flags.uses_infomax() {
        report.stages.push(StageKind::InfomaxUpdate);
        state
            .apply_infomax_update(&store, log.item_to_entity())
            .map_err(|e| e.in_stage(StageKind::InfomaxUpdate.name()))?;
    }

    // Stage 6: main training with early stopping.
    report.stages.push(StageKind::MainTraining);
    while epochs_done < config.max_epochs {
        let loss_r = bpr_epoch(
            config,
            &mut state,
            log,
            &train_pairs,
            &mut optimizer,
            &mut rng,
        )?;
        epochs_done += 1;
        let precision = validation_precision(&state, log, config.eval_k);
        val_history.push(precision.unwrap_or(0.0));
        report.epochs.push(EpochRow {
            stage: StageKind::MainTraining,
            epoch: epochs_done,
            loss_g: None,
            loss_com: None,
            loss_w: None,
            loss_r: Some(loss_r),
            val_precision: precision,
        });
        if super::early_stop(&val_history, config.patience) {
            info!("early stop at epoch {epochs_done}");
            break;
        }
    }

    report.stop_epoch = epochs_done;
    report.wall_time_secs = started.elapsed().as_secs_f64();

    if let Some(dir) = data.out_dir {
        let ckpt = Checkpoint::from_state(&state, &store);
        ckpt.save(dir.join("model.kirs"))?;
        std::fs::write(dir.join("train_report.csv"), report.to_csv())
            .map_err(|e| KirsError::io(dir.join("train_report.csv"), e))?;
    }

    Ok(PipelineOutput {
        state,
        store,
        report,
    })
}

/// Validation Precision@K; `None` when no validation queries exist.
fn validation_precision(state: &PreferenceState, log: &InteractionLog, k: usize) -> Option<f64> {
    let (outcomes, _) = evaluate_validation(state, log, k);
    aggregate(&outcomes, k).ok().and_then(|r| r.precision)
}

/// Rank against valid-split positives (train excluded from candidates).
fn evaluate_validation(
    state: &PreferenceState,
    log: &InteractionLog,
    k: usize,
) -> (Vec<crate::eval::QueryOutcome>, usize) {
    use crate::eval::{metrics_at_k, QueryOutcome, RankingResult};
    let mut outcomes = Vec::new();
    let mut skipped = 0usize;
    for user in 0..log.n_users() as u32 {
        let train = log.items_in_split(user, Split::Train);
        if train.is_empty() {
            skipped += 1;
            continue;
        }
        let exclude: std::collections::HashSet<u32> = train.into_iter().collect();
        let relevant: std::collections::HashSet<u32> =
            log.items_in_split(user, Split::Valid).into_iter().collect();
        if relevant.is_empty() {
            outcomes.push(QueryOutcome::Excluded);
            continue;
        }
        let mut scored: Vec<(f64, u32)> = (0..log.n_items() as u32)
            .filter(|i| !exclude.contains(i))
            .map(|i| (state.link_distance(user, i).distance, i))
            .collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let result = RankingResult {
            query: user,
            candidates: scored.into_iter().map(|(_, i)| i).collect(),
            relevant,
        };
        outcomes.push(match metrics_at_k(&result, k) {
            Some(m) => QueryOutcome::TopK(m),
            None => QueryOutcome::Excluded,
        });
    }
    (outcomes, skipped)
}

/// One BPR epoch over shuffled train pairs.
fn bpr_epoch(
    config: &TrainConfig,
    state: &mut PreferenceState,
    log: &InteractionLog,
    train_pairs: &[(u32, u32)],
    optimizer: &mut Adagrad,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(config.batch_size) {
        let mut batch = Vec::with_capacity(chunk.len());
        for &idx in chunk {
            let (user, pos) = train_pairs[idx];
            let neg = log.sample_negative_item(user, rng)?;
            batch.push((user, pos, neg));
        }
        let mut tape = Tape::new();
        let (loss, vars) = state.bpr_loss_on_tape(&mut tape, &batch);
        total += tape.value(loss).item();
        batches += 1;
        let grads = tape.backward(loss);
        let targets = state.grad_targets(&vars);
        optimizer.step(state.params_mut(), &targets, &grads)?;
    }
    Ok(total / batches.max(1) as f64)
}

/// One warm-up epoch: joint BPR + InfoNCE per batch.
#[allow(clippy::too_many_arguments)]
fn warmup_epoch(
    config: &TrainConfig,
    state: &mut PreferenceState,
    encoder: &ContrastiveEncoder,
    store: &InfomaxStore,
    log: &InteractionLog,
    train_pairs: &[(u32, u32)],
    optimizer: &mut Adagrad,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    order.shuffle(rng);
    let mut total_w = 0.0;
    let mut total_r = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(config.batch_size) {
        let mut batch = Vec::with_capacity(chunk.len());
        for &idx in chunk {
            let (user, pos) = train_pairs[idx];
            let neg = log.sample_negative_item(user, rng)?;
            batch.push((user, pos, neg));
        }

        let mut tape = Tape::new();
        let vars = state.bind_params(&mut tape);
        let bpr = state.bpr_loss_with_vars(&mut tape, &vars, &batch);

        // Contrastive anchors: the distinct items of the batch that have a
        // nonzero Infomax vector (unlinked items have nothing to contrast).
        let mut items: Vec<u32> = batch.iter().map(|&(_, pos, _)| pos).collect();
        items.sort_unstable();
        items.dedup();
        let mut anchored: Vec<(u32, Vec<f64>)> = Vec::new();
        for &item in &items {
            if let Some(entity) = log.item_entity(item) {
                let (d, miss) = store.lookup(LookupKind::Entity, entity as u64);
                if !miss && d.iter().any(|&v| v != 0.0) {
                    anchored.push((item, d));
                }
            }
        }

        let mut targets = state.grad_targets(&vars);
        let loss = if anchored.len() >= 2 {
            let mut infomax_rows = Tensor::zeros(anchored.len(), store.total_dim());
            for (r, (_, d)) in anchored.iter().enumerate() {
                infomax_rows.row_mut(r).copy_from_slice(d);
            }
            let d_leaf = tape.leaf(infomax_rows);
            let enc_vars = encoder.encode_on_tape(&mut tape, state.params(), d_leaf);
            let anchor_rows = tape.rows(
                vars.items,
                anchored.iter().map(|&(i, _)| i as usize).collect(),
            );
            let infonce = infonce_on_tape(
                &mut tape,
                anchor_rows,
                enc_vars.encoded,
                config.temperature,
                config.contrastive_negatives,
            );
            targets.extend(enc_vars.grad_targets(encoder));
            tape.add(bpr, infonce)
        } else {
            bpr
        };

        total_w += tape.value(loss).item();
        total_r += tape.value(bpr).item();
        batches += 1;
        let grads = tape.backward(loss);
        optimizer.step(state.params_mut(), &targets, &grads)?;
    }
    Ok((
        total_w / batches.max(1) as f64,
        total_r / batches.max(1) as f64,
    ))
}
