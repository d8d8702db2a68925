//! Named parameter tensors plus per-parameter optimizer state.

use std::collections::HashMap;

use rand::Rng;

use super::tensor::Tensor;

/// Index of a parameter inside a [`ParamStore`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    /// Insertion index inside the owning store.
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-parameter slot: value, optimizer accumulators, and whether rows must
/// be renormalized to unit L2 after each step (projection vectors).
pub struct ParamSlot {
    pub name: String,
    pub value: Tensor,
    pub unit_rows: bool,
    /// Adagrad squared-gradient accumulator, lazily allocated.
    pub adagrad_acc: Option<Tensor>,
    /// Adam first/second moments plus step count, lazily allocated.
    pub adam_m: Option<Tensor>,
    pub adam_v: Option<Tensor>,
    pub adam_t: u64,
}

/// Collection of named trainable tensors.
#[derive(Default)]
pub struct ParamStore {
    slots: Vec<ParamSlot>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> ParamId {
        self.insert_with(name, value, false)
    }

    /// Insert a parameter whose rows are kept at unit L2 norm after updates.
    pub fn insert_unit_rows(&mut self, name: &str, value: Tensor) -> ParamId {
        self.insert_with(name, value, true)
    }

    fn insert_with(&mut self, name: &str, value: Tensor, unit_rows: bool) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.slots.len());
        self.slots.push(ParamSlot {
            name: name.to_string(),
            value,
            unit_rows,
            adagrad_acc: None,
            adam_m: None,
            adam_v: None,
            adam_t: 0,
        });
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> ParamId {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn try_id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.slots[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.slots[id.0].value
    }

    pub fn slot(&self, id: ParamId) -> &ParamSlot {
        &self.slots[id.0]
    }

    pub fn slot_mut(&mut self, id: ParamId) -> &mut ParamSlot {
        &mut self.slots[id.0]
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.slots.len()).map(ParamId)
    }

    /// Renormalize every row of each unit-constrained parameter.
    pub fn renormalize_unit_rows(&mut self) {
        for slot in &mut self.slots {
            if !slot.unit_rows {
                continue;
            }
            normalize_rows(&mut slot.value);
        }
    }
}

/// Scale each row to unit L2 norm; zero rows are left untouched.
pub fn normalize_rows(t: &mut Tensor) {
    for r in 0..t.rows() {
        let row = t.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }
}

/// Uniform init in [-scale, scale].
pub fn uniform_init<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    Tensor::from_rows(rows, cols, data)
}

/// Variance-preserving init for a (fan_out × fan_in) weight matrix.
pub fn glorot_init<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let scale = (6.0 / (rows + cols) as f64).sqrt();
    uniform_init(rng, rows, cols, scale)
}

/// Random unit rows (projection-vector init).
pub fn unit_rows_init<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let mut t = uniform_init(rng, rows, cols, 1.0);
    normalize_rows(&mut t);
    t
}
