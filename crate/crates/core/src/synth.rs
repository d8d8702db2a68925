//! Synthetic fixtures: a block-structured KG for structural learning
//! checks, random implicit feedback for overfit checks, and a small
//! genre-structured world where KG signal genuinely helps ranking.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::kg_data::{Interaction, InteractionLog, KnowledgeGraph, Split, Triple};

/// Block-structured KG: entities fall into blocks, relation `k` connects
/// every entity of block `b` to entities of block `(b + k + 1) % B`.
/// Returns the training graph and the held-out triples.
pub fn block_kg(
    n_entities: usize,
    n_blocks: usize,
    n_relations: usize,
    holdout_fraction: f64,
    seed: u64,
) -> (KnowledgeGraph, Vec<Triple>) {
    assert!(n_entities % n_blocks == 0, "blocks must divide entities");
    let block_size = n_entities / n_blocks;
    let block_of = |e: usize| e / block_size;
    let mut all = Vec::new();
    for e in 0..n_entities {
        for r in 0..n_relations {
            let target_block = (block_of(e) + r + 1) % n_blocks;
            for t in 0..block_size {
                all.push(Triple::new(
                    e as u32,
                    r as u32,
                    (target_block * block_size + t) as u32,
                ));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    let n_holdout = (all.len() as f64 * holdout_fraction).round() as usize;
    let held_out = all.split_off(all.len() - n_holdout);

    let entity_names = (0..n_entities).map(|e| format!("entity {e}")).collect();
    let relation_names = (0..n_relations).map(|r| format!("relation {r}")).collect();
    (
        KnowledgeGraph::from_parts(entity_names, relation_names, all),
        held_out,
    )
}

/// Dense random implicit feedback, all records in the train split.
pub fn overfit_interactions(
    n_users: usize,
    n_items: usize,
    per_user: usize,
    seed: u64,
) -> InteractionLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for user in 0..n_users {
        let mut items: Vec<u32> = (0..n_items as u32).collect();
        items.shuffle(&mut rng);
        for &item in items.iter().take(per_user) {
            records.push(Interaction {
                user: user as u32,
                item,
                split: Split::Train,
            });
        }
    }
    InteractionLog::from_parts(
        (0..n_users).map(|u| format!("user {u}")).collect(),
        (0..n_items).map(|i| format!("item {i}")).collect(),
        records,
    )
}

/// Size knobs of the genre world.
#[derive(Clone, Debug)]
pub struct GenreWorldConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_genres: usize,
    /// Train records per user (drawn from the user's preferred genres).
    pub train_per_user: usize,
    pub valid_per_user: usize,
    pub test_per_user: usize,
}

impl Default for GenreWorldConfig {
    fn default() -> Self {
        GenreWorldConfig {
            n_users: 60,
            n_items: 48,
            n_genres: 4,
            train_per_user: 4,
            valid_per_user: 2,
            test_per_user: 3,
        }
    }
}

/// A world where items carry a latent genre, users prefer one genre, and
/// the KG exposes the genre through `has genre` triples plus creator
/// entities shared within a genre. Interactions are sparse enough that the
/// KG signal matters.
pub fn genre_world(config: &GenreWorldConfig, seed: u64) -> (InteractionLog, KnowledgeGraph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let genre_of = |item: usize| item % config.n_genres;

    // Entities: one per item, one per genre, one creator per genre.
    let mut entity_names: Vec<String> = Vec::new();
    for item in 0..config.n_items {
        entity_names.push(format!("title {item} of kind {}", genre_of(item)));
    }
    let genre_base = entity_names.len();
    for g in 0..config.n_genres {
        entity_names.push(format!("kind {g}"));
    }
    let creator_base = entity_names.len();
    for g in 0..config.n_genres {
        entity_names.push(format!("creator of kind {g}"));
    }

    let relation_names: Vec<String> = vec!["has kind".into(), "created by".into()];
    let mut triples = Vec::new();
    for item in 0..config.n_items {
        let g = genre_of(item);
        triples.push(Triple::new(
            item as u32,
            0,
            (genre_base + g) as u32,
        ));
        triples.push(Triple::new(
            item as u32,
            1,
            (creator_base + g) as u32,
        ));
    }
    let graph = KnowledgeGraph::from_parts(entity_names, relation_names, triples);

    // Users: one preferred genre each; interactions drawn from it with a
    // little noise.
    let mut records = Vec::new();
    for user in 0..config.n_users {
        let preferred = user % config.n_genres;
        let mut in_genre: Vec<u32> = (0..config.n_items as u32)
            .filter(|&i| genre_of(i as usize) == preferred)
            .collect();
        in_genre.shuffle(&mut rng);
        let needed = config.train_per_user + config.valid_per_user + config.test_per_user;
        // Sprinkle one out-of-genre item into training as noise.
        let mut picked: Vec<u32> = in_genre.into_iter().take(needed).collect();
        if rng.gen::<f64>() < 0.3 {
            let noise = rng.gen_range(0..config.n_items as u32);
            if !picked.contains(&noise) {
                picked.pop();
                picked.insert(0, noise);
            }
        }
        for (k, &item) in picked.iter().enumerate() {
            let split = if k < config.train_per_user {
                Split::Train
            } else if k < config.train_per_user + config.valid_per_user {
                Split::Valid
            } else {
                Split::Test
            };
            records.push(Interaction {
                user: user as u32,
                item,
                split,
            });
        }
    }

    let mut log = InteractionLog::from_parts(
        (0..config.n_users).map(|u| format!("user {u}")).collect(),
        (0..config.n_items)
            .map(|i| format!("title {i} of kind {}", genre_of(i)))
            .collect(),
        records,
    );
    // Items link to their title entities (same index by construction).
    let links = (0..config.n_items).map(|i| Some(i as u32)).collect();
    log.set_item_to_entity(links);
    (log, graph)
}

/// Write the genre world as the canonical TSV fixture set:
/// `interactions.tsv` (with split tags), `triples.tsv`, `links.tsv`.
pub fn write_fixture_files(
    dir: &std::path::Path,
    config: &GenreWorldConfig,
    seed: u64,
) -> crate::error::Result<()> {
    use crate::error::KirsError;
    let (log, graph) = genre_world(config, seed);
    let mut interactions = String::new();
    for r in log.records() {
        interactions.push_str(&format!(
            "{}\t{}\t{}\n",
            log.user_name(r.user),
            log.item_name(r.item),
            r.split.tag()
        ));
    }
    std::fs::write(dir.join("interactions.tsv"), interactions)
        .map_err(|e| KirsError::io(dir.join("interactions.tsv"), e))?;

    let mut triples = String::new();
    for t in graph.triples() {
        triples.push_str(&format!(
            "{}\t{}\t{}\n",
            graph.entity_name(t.head),
            graph.relation_name(t.relation),
            graph.entity_name(t.tail)
        ));
    }
    std::fs::write(dir.join("triples.tsv"), triples)
        .map_err(|e| KirsError::io(dir.join("triples.tsv"), e))?;

    let mut links = String::new();
    for item in 0..log.n_items() as u32 {
        if let Some(entity) = log.item_entity(item) {
            links.push_str(&format!(
                "{}\t{}\n",
                log.item_name(item),
                graph.entity_name(entity)
            ));
        }
    }
    std::fs::write(dir.join("links.tsv"), links)
        .map_err(|e| KirsError::io(dir.join("links.tsv"), e))?;
    Ok(())
}
