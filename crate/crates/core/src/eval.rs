//! Ranking evaluation: Precision/Recall/F1/Hit/nDCG at K for top-K
//! recommendation, and Hit@K plus Mean Rank for KG completion.
//!
//! Per-query work is embarrassingly parallel; results are collected in
//! query order so aggregation is deterministic under any worker count.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{KirsError, Result};
use crate::infomax::{InfomaxStore, LookupKind};
use crate::kg_data::{InteractionLog, KnowledgeGraph, Split, Triple};
use crate::preference::PreferenceState;

/// Which items compete in a user's ranking.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum CandidatePolicy {
    /// Full catalog minus the user's train/valid positives (default).
    FullCatalog,
    /// Only items appearing in some test record (comparability studies).
    TestItemsOnly,
}

/// One query's ordered candidates and its relevance labels.
#[derive(Clone, Debug)]
pub struct RankingResult {
    pub query: u32,
    /// Best first; no duplicates.
    pub candidates: Vec<u32>,
    pub relevant: HashSet<u32>,
}

/// The five @K metrics of one included query.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct QueryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hit: f64,
    pub ndcg: f64,
}

/// Per-query outcome fed to [`aggregate`].
#[derive(Clone, Debug)]
pub enum QueryOutcome {
    /// Empty relevant set: excluded from averages, counted.
    Excluded,
    TopK(QueryMetrics),
    /// 1-based rank of the true entity in a completion query.
    CompletionRank(usize),
}

/// Macro-averaged metrics. Fields are `None` when no query of the
/// corresponding kind was aggregated.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub k: usize,
    pub n_queries: usize,
    pub n_excluded: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub hit: Option<f64>,
    pub ndcg: Option<f64>,
    pub mean_rank: Option<f64>,
}

impl MetricReport {
    /// CSV with a header row; percentages to 2 decimals, MR to 1.
    pub fn to_csv(&self) -> String {
        let fmt_pct = |v: Option<f64>| match v {
            Some(x) => format!("{:.2}", x * 100.0),
            None => String::new(),
        };
        let fmt_mr = |v: Option<f64>| match v {
            Some(x) => format!("{x:.1}"),
            None => String::new(),
        };
        format!(
            "k,n_queries,n_excluded,precision,recall,f1,hit,ndcg,mean_rank\n{},{},{},{},{},{},{},{},{}\n",
            self.k,
            self.n_queries,
            self.n_excluded,
            fmt_pct(self.precision),
            fmt_pct(self.recall),
            fmt_pct(self.f1),
            fmt_pct(self.hit),
            fmt_pct(self.ndcg),
            fmt_mr(self.mean_rank),
        )
    }

    /// Aligned console table (percentages, 2 decimals).
    pub fn to_table(&self) -> String {
        let mut header = String::new();
        let mut values = String::new();
        let mut push = |name: &str, v: Option<f64>, pct: bool| {
            if let Some(x) = v {
                header.push_str(&format!("{name:>12}"));
                if pct {
                    values.push_str(&format!("{:>12.2}", x * 100.0));
                } else {
                    values.push_str(&format!("{x:>12.1}"));
                }
            }
        };
        push("Precision", self.precision, true);
        push("Recall", self.recall, true);
        push("F1", self.f1, true);
        push("Hit", self.hit, true);
        push("NDCG", self.ndcg, true);
        push("MR", self.mean_rank, false);
        format!(
            "{header}\n{values}\n({} queries at K={}, {} excluded)\n",
            self.n_queries, self.k, self.n_excluded
        )
    }
}

/// Compute the five metrics of one query at cutoff K; `None` when the
/// relevant set is empty (the query is excluded from averages).
pub fn metrics_at_k(result: &RankingResult, k: usize) -> Option<QueryMetrics> {
    assert!(k >= 1, "K must be at least 1");
    if result.relevant.is_empty() {
        return None;
    }
    let top: Vec<u32> = result.candidates.iter().take(k).copied().collect();
    let hits = top.iter().filter(|c| result.relevant.contains(c)).count();
    let precision = hits as f64 / k as f64;
    let recall = hits as f64 / result.relevant.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let hit = if hits > 0 { 1.0 } else { 0.0 };

    let dcg: f64 = top
        .iter()
        .enumerate()
        .filter(|(_, c)| result.relevant.contains(c))
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let ideal = k.min(result.relevant.len());
    let idcg: f64 = (0..ideal).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    let ndcg = if idcg > 0.0 { dcg / idcg } else { 0.0 };

    Some(QueryMetrics {
        precision,
        recall,
        f1,
        hit,
        ndcg,
    })
}

/// Rank all candidate items for one user by ascending link distance, ties
/// broken by ascending item id. Relevant set = the user's test positives.
/// Returns `None` for users with no training records (skipped upstream).
pub fn rank_items(
    state: &PreferenceState,
    log: &InteractionLog,
    user: u32,
    policy: CandidatePolicy,
) -> Option<RankingResult> {
    if log.train_items(user).is_empty() {
        return None;
    }
    let exclude: HashSet<u32> = log
        .items_in_split(user, Split::Train)
        .into_iter()
        .chain(log.items_in_split(user, Split::Valid))
        .collect();
    let universe: Vec<u32> = match policy {
        CandidatePolicy::FullCatalog => (0..log.n_items() as u32).collect(),
        CandidatePolicy::TestItemsOnly => {
            let mut items: Vec<u32> = log
                .records()
                .iter()
                .filter(|r| r.split == Split::Test)
                .map(|r| r.item)
                .collect();
            items.sort_unstable();
            items.dedup();
            items
        }
    };

    let mut scored: Vec<(f64, u32)> = universe
        .into_iter()
        .filter(|i| !exclude.contains(i))
        .map(|i| (state.link_distance(user, i).distance, i))
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

    let relevant: HashSet<u32> = log.items_in_split(user, Split::Test).into_iter().collect();
    Some(RankingResult {
        query: user,
        candidates: scored.into_iter().map(|(_, i)| i).collect(),
        relevant,
    })
}

/// Evaluate every user in parallel (deterministic: results keep user order).
/// Skipped users (no training records) are reported in the second value.
pub fn evaluate_users(
    state: &PreferenceState,
    log: &InteractionLog,
    policy: CandidatePolicy,
    k: usize,
) -> (Vec<QueryOutcome>, usize) {
    let users: Vec<u32> = (0..log.n_users() as u32).collect();
    let per_user: Vec<Option<QueryOutcome>> = users
        .par_iter()
        .map(|&user| {
            rank_items(state, log, user, policy).map(|r| match metrics_at_k(&r, k) {
                Some(m) => QueryOutcome::TopK(m),
                None => QueryOutcome::Excluded,
            })
        })
        .collect();
    let skipped = per_user.iter().filter(|o| o.is_none()).count();
    (per_user.into_iter().flatten().collect(), skipped)
}

/// Macro average over included queries; Mean Rank averages completion
/// ranks and Hit@K counts ranks ≤ K.
pub fn aggregate(outcomes: &[QueryOutcome], k: usize) -> Result<MetricReport> {
    let mut n_excluded = 0usize;
    let mut topk: Vec<&QueryMetrics> = Vec::new();
    let mut ranks: Vec<usize> = Vec::new();
    for o in outcomes {
        match o {
            QueryOutcome::Excluded => n_excluded += 1,
            QueryOutcome::TopK(m) => topk.push(m),
            QueryOutcome::CompletionRank(r) => ranks.push(*r),
        }
    }
    let n_queries = topk.len() + ranks.len();
    if n_queries == 0 {
        return Err(KirsError::Domain(
            "no queries were included in the aggregation".into(),
        ));
    }

    let mean = |f: fn(&QueryMetrics) -> f64| -> Option<f64> {
        if topk.is_empty() {
            None
        } else {
            Some(topk.iter().map(|m| f(m)).sum::<f64>() / topk.len() as f64)
        }
    };
    let mut hit = mean(|m| m.hit);
    let mut mean_rank = None;
    if !ranks.is_empty() {
        mean_rank = Some(ranks.iter().sum::<usize>() as f64 / ranks.len() as f64);
        let rank_hit = ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64;
        hit = Some(match hit {
            // Mixing both query kinds in one aggregate is unusual; weight by counts.
            Some(h) => (h * topk.len() as f64 + rank_hit * ranks.len() as f64) / n_queries as f64,
            None => rank_hit,
        });
    }

    Ok(MetricReport {
        k,
        n_queries,
        n_excluded,
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        hit,
        ndcg: mean(|m| m.ndcg),
        mean_rank,
    })
}

/// Which slot of the triple is hidden in a completion query.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum MissingSlot {
    Head,
    Tail,
}

/// Entity/relation vectors plus per-relation planes used for completion
/// scoring, lifted from an Infomax store (planes are embedded into the
/// full dimension with the structural half zeroed).
pub struct CompletionTables {
    pub entity: Vec<Vec<f64>>,
    pub relation: Vec<Vec<f64>>,
    pub plane: Vec<Vec<f64>>,
}

impl CompletionTables {
    pub fn from_store(store: &InfomaxStore, n_entities: usize, n_relations: usize) -> Self {
        let structural = store.structural_dim();
        let total = store.total_dim();
        let entity = (0..n_entities)
            .map(|e| store.lookup(LookupKind::Entity, e as u64).0)
            .collect();
        let relation = (0..n_relations)
            .map(|r| store.lookup(LookupKind::Relation, r as u64).0)
            .collect();
        let plane = (0..n_relations)
            .map(|r| {
                let (w, _) = store.lookup_plane(r as u64);
                let mut full = vec![0.0; total];
                full[structural..].copy_from_slice(&w);
                full
            })
            .collect();
        CompletionTables {
            entity,
            relation,
            plane,
        }
    }

    fn distance(&self, head: usize, relation: usize, tail: usize) -> f64 {
        let w = &self.plane[relation];
        let h = project_raw(&self.entity[head], w);
        let t = project_raw(&self.entity[tail], w);
        h.iter()
            .zip(self.relation[relation].iter())
            .zip(t.iter())
            .map(|((a, b), c)| (a + b - c).abs())
            .sum()
    }
}

fn project_raw(v: &[f64], w: &[f64]) -> Vec<f64> {
    let along: f64 = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
    v.iter().zip(w.iter()).map(|(a, b)| a - along * b).collect()
}

/// 1-based rank of the true entity when every entity is substituted into
/// the missing slot and candidates are sorted by ascending distance.
/// Raw protocol: pass `filter: None`. Filtered mode removes candidates
/// that form other observed triples. Ties are broken by placing the true
/// entity uniformly at random among its equals (seeded by the caller).
pub fn kg_completion_rank<R: Rng>(
    tables: &CompletionTables,
    triple: &Triple,
    missing: MissingSlot,
    filter: Option<&KnowledgeGraph>,
    rng: &mut R,
) -> usize {
    let truth = match missing {
        MissingSlot::Head => triple.head,
        MissingSlot::Tail => triple.tail,
    } as usize;
    let true_distance = tables.distance(
        triple.head as usize,
        triple.relation as usize,
        triple.tail as usize,
    );

    let mut smaller = 0usize;
    let mut equal = 0usize;
    for candidate in 0..tables.entity.len() {
        if candidate == truth {
            continue;
        }
        if let Some(graph) = filter {
            let substituted = match missing {
                MissingSlot::Head => Triple::new(candidate as u32, triple.relation, triple.tail),
                MissingSlot::Tail => Triple::new(triple.head, triple.relation, candidate as u32),
            };
            if graph.contains(&substituted) {
                continue;
            }
        }
        let d = match missing {
            MissingSlot::Head => {
                tables.distance(candidate, triple.relation as usize, triple.tail as usize)
            }
            MissingSlot::Tail => {
                tables.distance(triple.head as usize, triple.relation as usize, candidate)
            }
        };
        if d < true_distance {
            smaller += 1;
        } else if d == true_distance {
            equal += 1;
        }
    }
    1 + smaller + if equal > 0 { rng.gen_range(0..=equal) } else { 0 }
}

/// Run head and tail completion over a seeded sample of triples.
pub fn evaluate_completion(
    tables: &CompletionTables,
    graph: &KnowledgeGraph,
    sample_size: usize,
    filtered: bool,
    seed: u64,
) -> Vec<QueryOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triples: Vec<&Triple> = if sample_size > 0 && sample_size < graph.triples().len() {
        let mut idx: Vec<usize> = (0..graph.triples().len()).collect();
        // Partial Fisher-Yates for the first `sample_size` positions.
        for i in 0..sample_size {
            let j = rng.gen_range(i..idx.len());
            idx.swap(i, j);
        }
        idx[..sample_size]
            .iter()
            .map(|&i| &graph.triples()[i])
            .collect()
    } else {
        graph.triples().iter().collect()
    };

    let filter = filtered.then_some(graph);
    let mut out = Vec::with_capacity(triples.len() * 2);
    for t in triples {
        for missing in [MissingSlot::Head, MissingSlot::Tail] {
            out.push(QueryOutcome::CompletionRank(kg_completion_rank(
                tables, t, missing, filter, &mut rng,
            )));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(candidates: Vec<u32>, relevant: Vec<u32>) -> RankingResult {
        RankingResult {
            query: 0,
            candidates,
            relevant: relevant.into_iter().collect(),
        }
    }

    // Independent naive reference used as the oracle for the fast kernels.
    fn brute_force(result: &RankingResult, k: usize) -> Option<QueryMetrics> {
        if result.relevant.is_empty() {
            return None;
        }
        let mut hits = 0usize;
        let mut dcg = 0.0;
        for rank in 1..=k.min(result.candidates.len()) {
            let item = result.candidates[rank - 1];
            if result.relevant.contains(&item) {
                hits += 1;
                dcg += 1.0 / ((rank + 1) as f64).log2();
            }
        }
        let p = hits as f64 / k as f64;
        let r = hits as f64 / result.relevant.len() as f64;
        let mut idcg = 0.0;
        for rank in 1..=k.min(result.relevant.len()) {
            idcg += 1.0 / ((rank + 1) as f64).log2();
        }
        Some(QueryMetrics {
            precision: p,
            recall: r,
            f1: if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 },
            hit: if hits > 0 { 1.0 } else { 0.0 },
            ndcg: if idcg > 0.0 { dcg / idcg } else { 0.0 },
        })
    }

    #[test]
    fn three_relevant_in_top_ranks() {
        let r = result((0..20).collect(), vec![0, 1, 2]);
        let m = metrics_at_k(&r, 10).unwrap();
        assert!((m.precision - 0.3).abs() < 1e-12);
        assert!((m.recall - 1.0).abs() < 1e-12);
        assert!((m.f1 - 2.0 * 0.3 / 1.3).abs() < 1e-12);
        assert!((m.f1 - 0.4615).abs() < 1e-4);
        assert_eq!(m.hit, 1.0);
        assert!((m.ndcg - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_relevant_at_rank_three() {
        let r = result((0..20).collect(), vec![2]);
        let m = metrics_at_k(&r, 10).unwrap();
        assert!((m.ndcg - 0.5).abs() < 1e-12); // 1/log₂4
    }

    #[test]
    fn relevant_outside_cutoff_zeroes_everything() {
        let r = result((0..20).collect(), vec![10]);
        let m = metrics_at_k(&r, 10).unwrap();
        assert_eq!(
            (m.precision, m.recall, m.f1, m.hit, m.ndcg),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn empty_relevant_set_is_excluded() {
        let r = result((0..5).collect(), vec![]);
        assert!(metrics_at_k(&r, 3).is_none());
    }

    #[test]
    fn kernels_match_brute_force_on_random_instances() {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let n = rng.gen_range(5..60);
            let mut candidates: Vec<u32> = (0..n).collect();
            candidates.shuffle(&mut rng);
            let n_rel = rng.gen_range(0..=n as usize);
            let mut pool: Vec<u32> = (0..n).collect();
            pool.shuffle(&mut rng);
            let relevant: Vec<u32> = pool.into_iter().take(n_rel).collect();
            let k = rng.gen_range(1..=15);
            let r = result(candidates, relevant);
            let fast = metrics_at_k(&r, k);
            let slow = brute_force(&r, k);
            match (fast, slow) {
                (None, None) => {}
                (Some(f), Some(s)) => {
                    assert_eq!(f.precision, s.precision);
                    assert_eq!(f.recall, s.recall);
                    assert_eq!(f.hit, s.hit);
                    assert!((f.f1 - s.f1).abs() < 1e-12);
                    assert!((f.ndcg - s.ndcg).abs() < 1e-9);
                }
                other => panic!("exclusion disagreement: {other:?}"),
            }
        }
    }

    #[test]
    fn moving_a_relevant_item_up_never_decreases_ndcg() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        for _ in 0..50 {
            let n: u32 = 20;
            let relevant: Vec<u32> = vec![3, 7, 11];
            let mut candidates: Vec<u32> = (0..n).collect();
            use rand::seq::SliceRandom;
            candidates.shuffle(&mut rng);
            let pos = candidates
                .iter()
                .position(|c| relevant.contains(c))
                .unwrap();
            if pos == 0 {
                continue;
            }
            let before = metrics_at_k(&result(candidates.clone(), relevant.clone()), 10)
                .unwrap()
                .ndcg;
            candidates.swap(pos, pos - 1);
            let after = metrics_at_k(&result(candidates, relevant), 10).unwrap().ndcg;
            assert!(after >= before - 1e-12);
        }
    }

    #[test]
    fn permuting_below_cutoff_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let base: Vec<u32> = (0..30).collect();
        let relevant = vec![1, 4, 9];
        let m0 = metrics_at_k(&result(base.clone(), relevant.clone()), 10).unwrap();
        for _ in 0..20 {
            let mut permuted = base.clone();
            use rand::seq::SliceRandom;
            permuted[10..].shuffle(&mut rng);
            let m = metrics_at_k(&result(permuted, relevant.clone()), 10).unwrap();
            assert_eq!(m0, m);
        }
    }

    #[test]
    fn aggregate_single_query_is_identity() {
        let m = QueryMetrics {
            precision: 0.2,
            recall: 0.4,
            f1: 0.26,
            hit: 1.0,
            ndcg: 0.7,
        };
        let rep = aggregate(&[QueryOutcome::TopK(m)], 10).unwrap();
        assert_eq!(rep.precision, Some(0.2));
        assert_eq!(rep.n_queries, 1);
    }

    #[test]
    fn aggregate_averages_hits_and_ranks() {
        let hit = QueryMetrics {
            precision: 0.1,
            recall: 1.0,
            f1: 0.18,
            hit: 1.0,
            ndcg: 1.0,
        };
        let miss = QueryMetrics {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            hit: 0.0,
            ndcg: 0.0,
        };
        let rep = aggregate(&[QueryOutcome::TopK(hit), QueryOutcome::TopK(miss)], 10).unwrap();
        assert_eq!(rep.hit, Some(0.5));

        let rep = aggregate(
            &[
                QueryOutcome::CompletionRank(1),
                QueryOutcome::CompletionRank(3),
            ],
            10,
        )
        .unwrap();
        assert_eq!(rep.mean_rank, Some(2.0));
        assert_eq!(rep.hit, Some(1.0));
    }

    #[test]
    fn aggregate_all_excluded_is_error() {
        let err = aggregate(&[QueryOutcome::Excluded, QueryOutcome::Excluded], 10).unwrap_err();
        assert!(matches!(err, KirsError::Domain(_)));
    }

    fn toy_tables(n: usize, dim: usize) -> CompletionTables {
        CompletionTables {
            entity: (0..n)
                .map(|e| (0..dim).map(|d| ((e * dim + d) as f64).sin()).collect())
                .collect(),
            relation: vec![vec![0.1; dim]],
            plane: vec![vec![0.0; dim]],
        }
    }

    #[test]
    fn completion_rank_one_when_strictly_best() {
        // Make the true tail equal to h + r exactly.
        let mut tables = toy_tables(6, 3);
        tables.relation[0] = vec![0.5, 0.0, -0.5];
        let h = tables.entity[0].clone();
        tables.entity[5] = h.iter().zip(&tables.relation[0]).map(|(a, b)| a + b).collect();
        let t = Triple::new(0, 0, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rank = kg_completion_rank(&tables, &t, MissingSlot::Tail, None, &mut rng);
        assert_eq!(rank, 1);
    }

    #[test]
    fn completion_all_ties_average_to_midpoint() {
        // Identical entity vectors → every candidate ties; expected rank
        // (|V|+1)/2 under the random tie permutation.
        let n = 9;
        let tables = CompletionTables {
            entity: vec![vec![0.3; 4]; n],
            relation: vec![vec![0.2; 4]],
            plane: vec![vec![0.0; 4]],
        };
        let t = Triple::new(0, 0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 4000;
        let total: usize = (0..trials)
            .map(|_| kg_completion_rank(&tables, &t, MissingSlot::Tail, None, &mut rng))
            .sum();
        let mean = total as f64 / trials as f64;
        let expect = (n as f64 + 1.0) / 2.0;
        // 5σ bound for the mean of uniform{1..9}: σ≈2.58/√4000.
        assert!((mean - expect).abs() < 5.0 * 2.58 / (trials as f64).sqrt());
    }

    #[test]
    fn completion_hit_at_10_is_rank_fraction() {
        let outcomes = vec![
            QueryOutcome::CompletionRank(2),
            QueryOutcome::CompletionRank(11),
            QueryOutcome::CompletionRank(10),
            QueryOutcome::CompletionRank(400),
        ];
        let rep = aggregate(&outcomes, 10).unwrap();
        assert_eq!(rep.hit, Some(0.5));
        assert_eq!(rep.mean_rank, Some((2 + 11 + 10 + 400) as f64 / 4.0));
    }

    #[test]
    fn filtered_mode_skips_other_true_triples() {
        let mut tables = toy_tables(4, 2);
        // Entities 2 and 3 tie exactly with the truth? Simpler: make
        // entity 2 strictly better than the true tail 3, but (0, r, 2) is
        // an observed triple → filtered rank ignores it.
        tables.relation[0] = vec![0.0, 0.0];
        tables.entity[0] = vec![0.0, 0.0];
        tables.entity[2] = vec![0.0, 0.0]; // distance 0, best
        tables.entity[3] = vec![0.1, 0.0]; // the truth, distance 0.1
        tables.entity[1] = vec![9.0, 9.0];
        let graph = KnowledgeGraph::from_parts(
            (0..4).map(|i| format!("e{i}")).collect(),
            vec!["r".into()],
            vec![Triple::new(0, 0, 3), Triple::new(0, 0, 2)],
        );
        let t = Triple::new(0, 0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let raw = kg_completion_rank(&tables, &t, MissingSlot::Tail, None, &mut rng);
        assert_eq!(raw, 2);
        let filtered = kg_completion_rank(&tables, &t, MissingSlot::Tail, Some(&graph), &mut rng);
        assert_eq!(filtered, 1);
    }

    #[test]
    fn csv_report_has_header_and_two_decimal_percentages() {
        let rep = MetricReport {
            k: 10,
            n_queries: 3,
            n_excluded: 1,
            precision: Some(0.48591),
            recall: Some(0.21334),
            f1: Some(0.2454),
            hit: Some(0.92087),
            ndcg: Some(0.77478),
            mean_rank: None,
        };
        let csv = rep.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,n_queries,n_excluded,precision,recall,f1,hit,ndcg,mean_rank"
        );
        assert_eq!(lines.next().unwrap(), "10,3,1,48.59,21.33,24.54,92.09,77.48,");
    }
}
