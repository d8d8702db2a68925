//! File loaders with iterated frequency filtering.
//!
//! Input files are UTF-8, tab-separated, one record per line; lines starting
//! with '#' are comments. Interactions: `user\titem[\trating[\ttimestamp]]`.
//! Triples: `head\trelation\ttail`. Links: `item\tentity`.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use log::warn;

use crate::error::{KirsError, Result};

use super::{
    normalize_name, sort_ids, Interaction, InteractionLog, KnowledgeGraph, Split, Triple,
};

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| KirsError::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.to_string()))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .collect())
}

/// Load an interaction file and filter low-frequency users and items to a
/// fixed point. Contiguous indices are assigned by sorted original id.
/// Records read from a canonical file may carry a split tag in the third
/// column; otherwise everything starts in the train split.
pub fn load_interactions(
    path: impl AsRef<Path>,
    min_user_freq: usize,
    min_item_freq: usize,
) -> Result<InteractionLog> {
    let path = path.as_ref();
    let mut pairs: Vec<(String, String, Split)> = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let mut fields = line.split('\t');
        let user = fields.next().unwrap_or("").trim();
        let item = fields.next().map(str::trim).unwrap_or("");
        if user.is_empty() || item.is_empty() {
            return Err(KirsError::parse(
                path,
                line_no,
                "expected at least user and item columns",
            ));
        }
        // A third column holding a split tag is preserved; numeric ratings
        // and timestamps are ignored.
        let split = match fields.next().map(str::trim) {
            Some(tag) => Split::from_tag(tag).unwrap_or(Split::Train),
            None => Split::Train,
        };
        pairs.push((user.to_string(), item.to_string(), split));
    }

    // Iterate the two frequency filters to a fixed point.
    loop {
        let keep: Vec<bool> = {
            let mut user_freq: HashMap<&str, usize> = HashMap::new();
            let mut item_freq: HashMap<&str, usize> = HashMap::new();
            for (u, i, _) in &pairs {
                *user_freq.entry(u).or_default() += 1;
                *item_freq.entry(i).or_default() += 1;
            }
            pairs
                .iter()
                .map(|(u, i, _)| {
                    user_freq[u.as_str()] >= min_user_freq && item_freq[i.as_str()] >= min_item_freq
                })
                .collect()
        };
        let before = pairs.len();
        let mut flags = keep.iter();
        pairs.retain(|_| *flags.next().unwrap());
        if pairs.len() == before {
            break;
        }
    }

    if pairs.is_empty() {
        return Err(KirsError::Domain(format!(
            "no interactions left after filtering {} with thresholds ({min_user_freq}, {min_item_freq})",
            path.display()
        )));
    }

    let mut user_names: Vec<String> = pairs
        .iter()
        .map(|(u, _, _)| u.clone())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    let mut item_names: Vec<String> = pairs
        .iter()
        .map(|(_, i, _)| i.clone())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    sort_ids(&mut user_names);
    sort_ids(&mut item_names);
    let user_index: HashMap<&str, u32> = user_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i as u32))
        .collect();
    let item_index: HashMap<&str, u32> = item_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i as u32))
        .collect();

    let mut records: Vec<Interaction> = pairs
        .iter()
        .map(|(u, i, s)| Interaction {
            user: user_index[u.as_str()],
            item: item_index[i.as_str()],
            split: *s,
        })
        .collect();
    records.sort_by_key(|r| (r.user, r.item));

    Ok(InteractionLog::from_parts(
        user_names.clone(),
        item_names.clone(),
        records,
    ))
}

/// Load a triple file: drop blacklisted relations first, then filter
/// infrequent entities (counting every head/tail occurrence) together with
/// their triples, iterated to a fixed point.
pub fn load_triples(
    path: impl AsRef<Path>,
    min_entity_freq: usize,
    dropped_relations: &HashSet<String>,
) -> Result<KnowledgeGraph> {
    let path = path.as_ref();
    let mut raw: Vec<(String, String, String)> = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(KirsError::parse(
                path,
                line_no,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let (h, r, t) = (fields[0].trim(), fields[1].trim(), fields[2].trim());
        if h.is_empty() || r.is_empty() || t.is_empty() {
            return Err(KirsError::parse(path, line_no, "empty head/relation/tail"));
        }
        if dropped_relations.contains(r) {
            continue;
        }
        raw.push((h.to_string(), r.to_string(), t.to_string()));
    }

    loop {
        let keep: Vec<bool> = {
            let mut entity_freq: HashMap<&str, usize> = HashMap::new();
            for (h, _, t) in &raw {
                *entity_freq.entry(h).or_default() += 1;
                *entity_freq.entry(t).or_default() += 1;
            }
            raw.iter()
                .map(|(h, _, t)| {
                    entity_freq[h.as_str()] >= min_entity_freq
                        && entity_freq[t.as_str()] >= min_entity_freq
                })
                .collect()
        };
        let before = raw.len();
        let mut flags = keep.iter();
        raw.retain(|_| *flags.next().unwrap());
        if raw.len() == before {
            break;
        }
    }

    if raw.is_empty() {
        return Err(KirsError::Domain(format!(
            "no triples left after filtering {} with min entity frequency {min_entity_freq}",
            path.display()
        )));
    }

    let mut entity_names: Vec<String> = raw
        .iter()
        .flat_map(|(h, _, t)| [h.clone(), t.clone()])
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    let mut relation_names: Vec<String> = raw
        .iter()
        .map(|(_, r, _)| r.clone())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    sort_ids(&mut entity_names);
    sort_ids(&mut relation_names);
    let entity_index: HashMap<&str, u32> = entity_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i as u32))
        .collect();
    let relation_index: HashMap<&str, u32> = relation_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i as u32))
        .collect();

    let triples: Vec<Triple> = raw
        .iter()
        .map(|(h, r, t)| Triple {
            head: entity_index[h.as_str()],
            relation: relation_index[r.as_str()],
            tail: entity_index[t.as_str()],
        })
        .collect();

    Ok(KnowledgeGraph::from_parts(
        entity_names,
        relation_names,
        triples,
    ))
}

/// Load an item→entity link file and attach the links to the log.
///
/// Matching is exact-name, case-insensitive, after whitespace
/// normalization. Items without a match keep a null entity; two items
/// mapping to one entity violate injectivity and fail the load.
pub fn load_links(
    path: impl AsRef<Path>,
    log: &mut InteractionLog,
    graph: &KnowledgeGraph,
) -> Result<usize> {
    let path = path.as_ref();
    let norm_item_index: HashMap<String, u32> = log
        .item_names()
        .iter()
        .enumerate()
        .map(|(i, n)| (normalize_name(n), i as u32))
        .collect();

    let mut links: Vec<Option<u32>> = vec![None; log.n_items()];
    let mut claimed: HashMap<u32, u32> = HashMap::new();
    for (line_no, line) in read_lines(path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(KirsError::parse(
                path,
                line_no,
                format!("expected 2 tab-separated fields, found {}", fields.len()),
            ));
        }
        let Some(&item) = norm_item_index.get(&normalize_name(fields[0])) else {
            // The item was filtered out of the log; skip quietly.
            continue;
        };
        let Some(entity) = graph.entity_by_normalized_name(fields[1]) else {
            warn!(
                "{}:{line_no}: entity '{}' not found in KG; item keeps a null link",
                path.display(),
                fields[1].trim()
            );
            continue;
        };
        if let Some(&other) = claimed.get(&entity) {
            if other != item {
                return Err(KirsError::Domain(format!(
                    "{}:{line_no}: entity '{}' already linked to item '{}' — item→entity links must be injective",
                    path.display(),
                    fields[1].trim(),
                    log.item_name(other)
                )));
            }
        }
        claimed.insert(entity, item);
        links[item as usize] = Some(entity);
    }

    let linked = links.iter().filter(|l| l.is_some()).count();
    let missing = log.n_items() - linked;
    if missing > 0 {
        warn!("{missing} of {} items have no KG entity link", log.n_items());
    }
    log.set_item_to_entity(links);
    Ok(linked)
}
