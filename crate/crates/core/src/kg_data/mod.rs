//! Dataset ingestion: implicit-feedback interaction logs, KG triples,
//! item→entity linking, per-user splits, and negative sampling.
//!
//! All loaders are pure given their inputs; every randomized operation is a
//! deterministic function of (input, seed). Structures are immutable after
//! construction and safe to share read-only across workers.

mod load;
mod split;

pub use load::{load_interactions, load_links, load_triples};
pub use split::{cold_start_subsets, split_per_user};

use std::collections::{HashMap, HashSet};

use rand::Rng;

use crate::error::{KirsError, Result};

/// One (head, relation, tail) fact. Names live on the owning
/// [`KnowledgeGraph`]; ids are contiguous.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

impl Triple {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// The knowledge graph: triples over contiguous entity/relation ids with
/// the original text labels retained.
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    triples: Vec<Triple>,
    membership: HashSet<(u32, u32, u32)>,
    /// Normalized entity name → id, for item linking.
    entity_by_norm_name: HashMap<String, u32>,
}

/// Lowercase and collapse internal whitespace — the linking normal form.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl KnowledgeGraph {
    pub fn from_parts(
        entity_names: Vec<String>,
        relation_names: Vec<String>,
        triples: Vec<Triple>,
    ) -> Self {
        let membership = triples
            .iter()
            .map(|t| (t.head, t.relation, t.tail))
            .collect();
        let entity_by_norm_name = entity_names
            .iter()
            .enumerate()
            .map(|(i, n)| (normalize_name(n), i as u32))
            .collect();
        KnowledgeGraph {
            entity_names,
            relation_names,
            triples,
            membership,
            entity_by_norm_name,
        }
    }

    pub fn n_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_name(&self, id: u32) -> &str {
        &self.entity_names[id as usize]
    }

    pub fn relation_name(&self, id: u32) -> &str {
        &self.relation_names[id as usize]
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entity_names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.membership.contains(&(t.head, t.relation, t.tail))
    }

    pub fn entity_by_normalized_name(&self, name: &str) -> Option<u32> {
        self.entity_by_norm_name.get(&normalize_name(name)).copied()
    }
}

/// Which split a record belongs to.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Split> {
        match tag {
            "train" => Some(Split::Train),
            "valid" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// One implicit-feedback record.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub split: Split,
}

/// Implicit-feedback log over contiguous user/item ids, with the optional
/// item→entity link table.
#[derive(Clone, Debug)]
pub struct InteractionLog {
    user_names: Vec<String>,
    item_names: Vec<String>,
    records: Vec<Interaction>,
    item_to_entity: Vec<Option<u32>>,
    /// Sorted train-split items per user, for sampling and evaluation.
    user_train_items: Vec<Vec<u32>>,
}

impl InteractionLog {
    pub fn from_parts(
        user_names: Vec<String>,
        item_names: Vec<String>,
        records: Vec<Interaction>,
    ) -> Self {
        let item_to_entity = vec![None; item_names.len()];
        let mut log = InteractionLog {
            user_names,
            item_names,
            records,
            item_to_entity,
            user_train_items: Vec::new(),
        };
        log.rebuild_index();
        log
    }

    pub(crate) fn rebuild_index(&mut self) {
        let mut per_user = vec![Vec::new(); self.user_names.len()];
        for rec in &self.records {
            if rec.split == Split::Train {
                per_user[rec.user as usize].push(rec.item);
            }
        }
        for items in &mut per_user {
            items.sort_unstable();
            items.dedup();
        }
        self.user_train_items = per_user;
    }

    pub fn n_users(&self) -> usize {
        self.user_names.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_names.len()
    }

    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    pub fn records(&self) -> &[Interaction] {
        &self.records
    }


    pub fn user_name(&self, id: u32) -> &str {
        &self.user_names[id as usize]
    }

    pub fn item_name(&self, id: u32) -> &str {
        &self.item_names[id as usize]
    }

    pub fn user_names(&self) -> &[String] {
        &self.user_names
    }

    pub fn item_names(&self) -> &[String] {
        &self.item_names
    }

    pub fn item_entity(&self, item: u32) -> Option<u32> {
        self.item_to_entity[item as usize]
    }

    pub fn item_to_entity(&self) -> &[Option<u32>] {
        &self.item_to_entity
    }

    pub(crate) fn set_item_to_entity(&mut self, links: Vec<Option<u32>>) {
        assert_eq!(links.len(), self.item_names.len());
        self.item_to_entity = links;
    }

    /// Sorted train-split items of one user.
    pub fn train_items(&self, user: u32) -> &[u32] {
        &self.user_train_items[user as usize]
    }

    /// Items of one user in the given split, sorted ascending.
    pub fn items_in_split(&self, user: u32, split: Split) -> Vec<u32> {
        let mut items: Vec<u32> = self
            .records
            .iter()
            .filter(|r| r.user == user && r.split == split)
            .map(|r| r.item)
            .collect();
        items.sort_unstable();
        items.dedup();
        items
    }

    /// Uniform draw over items the user has no train-split interaction with.
    pub fn sample_negative_item<R: Rng>(&self, user: u32, rng: &mut R) -> Result<u32> {
        let seen = &self.user_train_items[user as usize];
        let n_items = self.item_names.len() as u32;
        let n_free = n_items as usize - seen.len();
        if n_free == 0 {
            return Err(KirsError::Sampling(format!(
                "user {user} has interacted with every item"
            )));
        }
        // Rejection sampling is cheap while the complement is large;
        // otherwise draw an index into the complement directly.
        if seen.len() * 2 < n_items as usize {
            loop {
                let candidate = rng.gen_range(0..n_items);
                if seen.binary_search(&candidate).is_err() {
                    return Ok(candidate);
                }
            }
        }
        let k = rng.gen_range(0..n_free);
        let mut skipped = 0usize;
        let mut seen_iter = seen.iter().peekable();
        for item in 0..n_items {
            if seen_iter.peek() == Some(&&item) {
                seen_iter.next();
                continue;
            }
            if skipped == k {
                return Ok(item);
            }
            skipped += 1;
        }
        unreachable!("complement index within bounds")
    }
}

/// Corpus-level counts for reporting.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_triples: usize,
}

impl DatasetStats {
    pub fn from_data(log: &InteractionLog, graph: &KnowledgeGraph) -> Self {
        DatasetStats {
            n_users: log.n_users(),
            n_items: log.n_items(),
            n_ratings: log.n_records(),
            n_entities: graph.n_entities(),
            n_relations: graph.n_relations(),
            n_triples: graph.triples().len(),
        }
    }
}

/// Sort ids numerically when every id parses as an integer, otherwise
/// lexicographically. Keeps index assignment deterministic for both
/// numeric-id and name-keyed datasets.
pub(crate) fn sort_ids(ids: &mut Vec<String>) {
    let all_numeric = ids.iter().all(|s| s.parse::<u64>().is_ok());
    if all_numeric {
        ids.sort_by_key(|s| s.parse::<u64>().unwrap());
    } else {
        ids.sort();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_log() -> InteractionLog {
        // 1 user, 4 items; train interactions with items 0 and 2.
        InteractionLog::from_parts(
            vec!["u0".into()],
            vec!["i0".into(), "i1".into(), "i2".into(), "i3".into()],
            vec![
                Interaction {
                    user: 0,
                    item: 0,
                    split: Split::Train,
                },
                Interaction {
                    user: 0,
                    item: 2,
                    split: Split::Train,
                },
                Interaction {
                    user: 0,
                    item: 3,
                    split: Split::Test,
                },
            ],
        )
    }

    #[test]
    fn negative_sampling_avoids_train_items_only() {
        let log = tiny_log();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let neg = log.sample_negative_item(0, &mut rng).unwrap();
            // Items 1 and 3 are fair game (3 is a test item, not train).
            assert!(neg == 1 || neg == 3);
        }
    }

    #[test]
    fn negative_sampling_forced_choice() {
        let log = InteractionLog::from_parts(
            vec!["u".into()],
            vec!["a".into(), "b".into()],
            vec![Interaction {
                user: 0,
                item: 0,
                split: Split::Train,
            }],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            assert_eq!(log.sample_negative_item(0, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn negative_sampling_full_catalog_errors() {
        let log = InteractionLog::from_parts(
            vec!["u".into()],
            vec!["a".into(), "b".into()],
            vec![
                Interaction {
                    user: 0,
                    item: 0,
                    split: Split::Train,
                },
                Interaction {
                    user: 0,
                    item: 1,
                    split: Split::Train,
                },
            ],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            log.sample_negative_item(0, &mut rng),
            Err(KirsError::Sampling(_))
        ));
    }

    #[test]
    fn negative_sampling_two_candidates_is_uniform() {
        // 10 items, 8 in train; candidates are the remaining 2.
        // Binomial(10_000, 0.5): 5σ = 250.
        let item_names: Vec<String> = (0..10).map(|i| format!("i{i}")).collect();
        let records = (0..8)
            .map(|i| Interaction {
                user: 0,
                item: i,
                split: Split::Train,
            })
            .collect();
        let log = InteractionLog::from_parts(vec!["u".into()], item_names, records);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut first = 0u32;
        for _ in 0..10_000 {
            let neg = log.sample_negative_item(0, &mut rng).unwrap();
            assert!(neg == 8 || neg == 9);
            if neg == 8 {
                first += 1;
            }
        }
        assert!((first as f64 - 5000.0).abs() < 250.0, "first={first}");
    }

    #[test]
    fn graph_membership_and_normalized_lookup() {
        let g = KnowledgeGraph::from_parts(
            vec!["The  Lord of Rings".into(), "Tolkien".into()],
            vec!["author".into()],
            vec![Triple::new(0, 0, 1)],
        );
        assert!(g.contains(&Triple::new(0, 0, 1)));
        assert!(!g.contains(&Triple::new(1, 0, 0)));
        assert_eq!(g.entity_by_normalized_name("the lord OF rings"), Some(0));
        assert_eq!(g.entity_by_normalized_name("missing"), None);
    }

    #[test]
    fn id_sort_numeric_vs_lexicographic() {
        let mut numeric = vec!["10".to_string(), "2".to_string(), "1".to_string()];
        sort_ids(&mut numeric);
        assert_eq!(numeric, vec!["1", "2", "10"]);
        let mut mixed = vec!["b".to_string(), "10".to_string(), "a".to_string()];
        sort_ids(&mut mixed);
        assert_eq!(mixed, vec!["10", "a", "b"]);
    }
}
