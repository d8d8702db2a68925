//! Hyperplane translation kernel: projection onto a relation hyperplane,
//! L1 translation distance, margin ranking loss, and triple corruption.
//!
//! These are the stateless primitives shared by semantic pretraining and
//! the preference-connection recommender.

use rand::Rng;

use crate::error::{KirsError, Result};
use crate::kg_data::{KnowledgeGraph, Triple};

/// Unit-norm normal vector of a relation (or preference) hyperplane.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionVector {
    values: Vec<f64>,
}

impl ProjectionVector {
    /// Normalizes the input to unit L2 norm.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(KirsError::contract("projection vector must be nonzero"));
        }
        Ok(ProjectionVector {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// Wrap values that are already unit norm (within 1e-6).
    pub fn from_unit(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(KirsError::contract(format!(
                "projection vector norm {norm} is not 1"
            )));
        }
        Ok(ProjectionVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Project `v` onto the hyperplane with unit normal `w`: v − (wᵀv)·w.
pub fn project(v: &[f64], w: &ProjectionVector) -> Result<Vec<f64>> {
    if v.len() != w.dim() {
        return Err(KirsError::contract(format!(
            "project: vector dim {} != plane dim {}",
            v.len(),
            w.dim()
        )));
    }
    let along: f64 = v.iter().zip(w.values()).map(|(a, b)| a * b).sum();
    Ok(v.iter()
        .zip(w.values())
        .map(|(a, b)| a - along * b)
        .collect())
}

/// L1 translation distance ‖h⊥ + r − t⊥‖₁ after projecting head and tail.
pub fn triple_distance(h: &[f64], r: &[f64], t: &[f64], w: &ProjectionVector) -> Result<f64> {
    if h.len() != r.len() || h.len() != t.len() {
        return Err(KirsError::contract("triple_distance: dim mismatch"));
    }
    let hp = project(h, w)?;
    let tp = project(t, w)?;
    Ok(hp
        .iter()
        .zip(r.iter())
        .zip(tp.iter())
        .map(|((a, b), c)| (a + b - c).abs())
        .sum())
}

/// Margin ranking loss max(0, pos + γ − neg).
pub fn margin_loss(pos: f64, neg: f64, gamma: f64) -> f64 {
    (pos + gamma - neg).max(0.0)
}

/// Which slot of a triple to corrupt when drawing a negative sample.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum CorruptMode {
    Tail,
    Relation,
    /// Off by default; enabled with the `corrupt_head` flag.
    Head,
}

/// Draw a corruption mode: 50/50 tail/relation, or uniform over all three
/// slots when head corruption is enabled.
pub fn draw_corrupt_mode<R: Rng>(rng: &mut R, corrupt_head: bool) -> CorruptMode {
    if corrupt_head {
        match rng.gen_range(0..3u8) {
            0 => CorruptMode::Tail,
            1 => CorruptMode::Relation,
            _ => CorruptMode::Head,
        }
    } else if rng.gen_range(0..2u8) == 0 {
        CorruptMode::Tail
    } else {
        CorruptMode::Relation
    }
}

/// A corrupted triple; `exhausted` is set when 100 rejection attempts all
/// landed on observed triples and the last sample was returned anyway.
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptedTriple {
    pub triple: Triple,
    pub exhausted: bool,
}

const MAX_REJECTIONS: usize = 100;

/// Resample one slot of `triple` uniformly over alternatives, rejecting
/// candidates observed in the graph.
pub fn corrupt_triple<R: Rng>(
    graph: &KnowledgeGraph,
    triple: &Triple,
    mode: CorruptMode,
    rng: &mut R,
) -> Result<CorruptedTriple> {
    let n_entities = graph.n_entities() as u32;
    let n_relations = graph.n_relations() as u32;
    match mode {
        CorruptMode::Tail | CorruptMode::Head if n_entities < 2 => {
            return Err(KirsError::Sampling(
                "entity corruption needs at least 2 entities".into(),
            ));
        }
        CorruptMode::Relation if n_relations < 2 => {
            return Err(KirsError::Sampling(
                "relation corruption needs at least 2 relations".into(),
            ));
        }
        _ => {}
    }

    let mut candidate = triple.clone();
    for attempt in 0..MAX_REJECTIONS {
        match mode {
            CorruptMode::Tail => {
                candidate.tail = resample(rng, n_entities, triple.tail);
            }
            CorruptMode::Relation => {
                candidate.relation = resample(rng, n_relations, triple.relation);
            }
            CorruptMode::Head => {
                candidate.head = resample(rng, n_entities, triple.head);
            }
        }
        if !graph.contains(&candidate) {
            return Ok(CorruptedTriple {
                triple: candidate,
                exhausted: false,
            });
        }
        let _ = attempt;
    }
    Ok(CorruptedTriple {
        triple: candidate,
        exhausted: true,
    })
}

/// Uniform draw over 0..n excluding `current`.
fn resample<R: Rng>(rng: &mut R, n: u32, current: u32) -> u32 {
    let drawn = rng.gen_range(0..n - 1);
    if drawn >= current {
        drawn + 1
    } else {
        drawn
    }
}
