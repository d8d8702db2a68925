//! The Infomax store: per-entity/relation concatenations `[e, s]` of the
//! structural and semantic vectors plus relation projection vectors,
//! persisted in a versioned binary format.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic "KIRS" (4 bytes)
//! format version  u32
//! semantic dim    u32
//! structural dim  u32
//! entity count    u64
//! relation count  u64
//! entity records:   id u64 + (structural+semantic) f32 values, [e, s]
//! relation records: id u64 + (structural+semantic) f32 values
//! plane records:    id u64 + semantic-dim f32 values (unit rows)
//! CRC32 of all record bytes, u32
//! ```
//!
//! Values are stored as IEEE-754 f32; a round trip through disk is
//! bit-exact at that precision.

use std::collections::HashMap;
use std::path::Path;

use log::warn;

use crate::error::{KirsError, Result, StoreError};

pub const MAGIC: [u8; 4] = *b"KIRS";
pub const FORMAT_VERSION: u32 = 1;

/// Identifier-keyed table of fixed-dimension real vectors, the common
/// export shape of both pretraining encoders. Vectors are indexed by the
/// contiguous entity/relation ids of the source graph.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub entity_vectors: Vec<Vec<f64>>,
    pub relation_vectors: Vec<Vec<f64>>,
    /// Unit-norm relation hyperplane normals; present on semantic tables.
    pub relation_planes: Option<Vec<Vec<f64>>>,
}

/// Which half of the store a lookup addresses.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum LookupKind {
    Entity,
    Relation,
}

/// Immutable store of Infomax vectors; safe for concurrent readers.
#[derive(Clone, Debug, PartialEq)]
pub struct InfomaxStore {
    semantic_dim: u32,
    structural_dim: u32,
    entities: Vec<(u64, Vec<f32>)>,
    relations: Vec<(u64, Vec<f32>)>,
    planes: Vec<(u64, Vec<f32>)>,
    entity_index: HashMap<u64, usize>,
    relation_index: HashMap<u64, usize>,
}

impl InfomaxStore {
    /// Concatenate `[e, s]` per id. Ids covered by only one table get zeros
    /// in the missing half (with a warning); a fully missing side behaves
    /// like a zero-width or zero-filled half depending on its declared dim.
    pub fn build(
        structural: Option<&EmbeddingTable>,
        semantic: Option<&EmbeddingTable>,
        n_entities: usize,
        n_relations: usize,
    ) -> Result<Self> {
        let structural_dim = structural.map(|t| t.dim).unwrap_or(0);
        let semantic_dim = semantic.map(|t| t.dim).unwrap_or(0);
        if let Some(t) = structural {
            check_table(t, "structural")?;
        }
        if let Some(t) = semantic {
            check_table(t, "semantic")?;
        }

        let mut missing_structural = 0usize;
        let mut missing_semantic = 0usize;
        let mut concat = |id: usize, pick: fn(&EmbeddingTable) -> &Vec<Vec<f64>>| {
            let mut v: Vec<f32> = Vec::with_capacity(structural_dim + semantic_dim);
            match structural {
                Some(t) if id < pick(t).len() => v.extend(pick(t)[id].iter().map(|&x| x as f32)),
                Some(_) => {
                    missing_structural += 1;
                    v.extend(std::iter::repeat(0.0).take(structural_dim));
                }
                None => v.extend(std::iter::repeat(0.0).take(structural_dim)),
            }
            match semantic {
                Some(t) if id < pick(t).len() => v.extend(pick(t)[id].iter().map(|&x| x as f32)),
                Some(_) => {
                    missing_semantic += 1;
                    v.extend(std::iter::repeat(0.0).take(semantic_dim));
                }
                None => v.extend(std::iter::repeat(0.0).take(semantic_dim)),
            }
            v
        };

        let entities: Vec<(u64, Vec<f32>)> = (0..n_entities)
            .map(|id| (id as u64, concat(id, |t| &t.entity_vectors)))
            .collect();
        let relations: Vec<(u64, Vec<f32>)> = (0..n_relations)
            .map(|id| (id as u64, concat(id, |t| &t.relation_vectors)))
            .collect();

        if missing_structural > 0 {
            warn!("{missing_structural} ids missing from the structural table were zero-filled");
        }
        if missing_semantic > 0 {
            warn!("{missing_semantic} ids missing from the semantic table were zero-filled");
        }

        let planes: Vec<(u64, Vec<f32>)> = (0..n_relations)
            .map(|id| {
                let values = semantic
                    .and_then(|t| t.relation_planes.as_ref())
                    .and_then(|p| p.get(id))
                    .map(|v| v.iter().map(|&x| x as f32).collect())
                    .unwrap_or_else(|| vec![0.0f32; semantic_dim]);
                (id as u64, values)
            })
            .collect();

        Ok(Self::from_records(
            structural_dim as u32,
            semantic_dim as u32,
            entities,
            relations,
            planes,
        ))
    }

    fn from_records(
        structural_dim: u32,
        semantic_dim: u32,
        entities: Vec<(u64, Vec<f32>)>,
        relations: Vec<(u64, Vec<f32>)>,
        planes: Vec<(u64, Vec<f32>)>,
    ) -> Self {
        let entity_index = entities.iter().enumerate().map(|(i, r)| (r.0, i)).collect();
        let relation_index = relations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.0, i))
            .collect();
        InfomaxStore {
            semantic_dim,
            structural_dim,
            entities,
            relations,
            planes,
            entity_index,
            relation_index,
        }
    }

    /// A store with no vectors at all (fully ablated pipeline).
    pub fn empty(structural_dim: u32, semantic_dim: u32) -> Self {
        Self::from_records(structural_dim, semantic_dim, vec![], vec![], vec![])
    }

    pub fn total_dim(&self) -> usize {
        (self.structural_dim + self.semantic_dim) as usize
    }

    pub fn structural_dim(&self) -> usize {
        self.structural_dim as usize
    }

    pub fn semantic_dim(&self) -> usize {
        self.semantic_dim as usize
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    /// Total, pure lookup: the stored vector as f64, or zeros plus a miss
    /// flag. A miss is a value, not an error.
    pub fn lookup(&self, kind: LookupKind, id: u64) -> (Vec<f64>, bool) {
        let (index, records) = match kind {
            LookupKind::Entity => (&self.entity_index, &self.entities),
            LookupKind::Relation => (&self.relation_index, &self.relations),
        };
        match index.get(&id) {
            Some(&pos) => (records[pos].1.iter().map(|&v| v as f64).collect(), false),
            None => (vec![0.0; self.total_dim()], true),
        }
    }

    /// Relation plane (semantic-dim, unit rows) or zeros with a miss flag.
    pub fn lookup_plane(&self, relation: u64) -> (Vec<f64>, bool) {
        match self.relation_index.get(&relation) {
            Some(&pos) => (self.planes[pos].1.iter().map(|&v| v as f64).collect(), false),
            None => (vec![0.0; self.semantic_dim as usize], true),
        }
    }

    /// Raw f32 access used by persistence tests.
    pub fn entity_records(&self) -> &[(u64, Vec<f32>)] {
        &self.entities
    }

    pub fn relation_records(&self) -> &[(u64, Vec<f32>)] {
        &self.relations
    }

    pub fn plane_records(&self) -> &[(u64, Vec<f32>)] {
        &self.planes
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        for (id, v) in self
            .entities
            .iter()
            .chain(self.relations.iter())
            .chain(self.planes.iter())
        {
            payload.extend_from_slice(&id.to_le_bytes());
            for x in v {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&payload);

        let mut out = Vec::with_capacity(32 + payload.len() + 4);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.semantic_dim.to_le_bytes());
        out.extend_from_slice(&self.structural_dim.to_le_bytes());
        out.extend_from_slice(&(self.entities.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.relations.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| KirsError::io(path, e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.take::<4>().map_err(|_| StoreError::Header("file shorter than header".into()))?;
        if magic != MAGIC {
            return Err(StoreError::BadMagic {
                expected: MAGIC,
                found: magic,
            }
            .into());
        }
        let version = r.u32().map_err(short_header)?;
        if version != FORMAT_VERSION {
            return Err(StoreError::Version {
                found: version,
                supported: FORMAT_VERSION,
            }
            .into());
        }
        let semantic_dim = r.u32().map_err(short_header)?;
        let structural_dim = r.u32().map_err(short_header)?;
        let n_entities = r.u64().map_err(short_header)? as usize;
        let n_relations = r.u64().map_err(short_header)? as usize;

        let payload_start = r.offset();
        let vec_dim = (semantic_dim + structural_dim) as usize;
        let mut record = 0usize;
        let mut read_section = |r: &mut Reader, count: usize, dim: usize| -> Result<Vec<(u64, Vec<f32>)>> {
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let id = r
                    .u64()
                    .map_err(|_| StoreError::Truncated { record })?;
                let mut v = Vec::with_capacity(dim);
                for _ in 0..dim {
                    v.push(r.f32().map_err(|_| StoreError::Truncated { record })?);
                }
                out.push((id, v));
                record += 1;
            }
            Ok(out)
        };

        let entities = read_section(&mut r, n_entities, vec_dim)?;
        let relations = read_section(&mut r, n_relations, vec_dim)?;
        let planes = read_section(&mut r, n_relations, semantic_dim as usize)?;
        let payload_end = r.offset();

        let expected = r
            .u32()
            .map_err(|_| StoreError::Truncated { record })?;
        let computed = crc32fast::hash(&bytes[payload_start..payload_end]);
        if expected != computed {
            return Err(StoreError::Checksum { expected, computed }.into());
        }

        Ok(Self::from_records(
            structural_dim,
            semantic_dim,
            entities,
            relations,
            planes,
        ))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(KirsError::MissingPrerequisite(format!(
                "infomax store not found at {}",
                path.display()
            )));
        }
        let bytes = std::fs::read(path).map_err(|e| KirsError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn short_header(_: StoreError) -> StoreError {
    StoreError::Header("file shorter than header".into())
}

fn check_table(t: &EmbeddingTable, which: &str) -> Result<()> {
    let ok = t.entity_vectors.iter().all(|v| v.len() == t.dim)
        && t.relation_vectors.iter().all(|v| v.len() == t.dim)
        && t.relation_planes
            .as_ref()
            .map(|p| p.iter().all(|v| v.len() == t.dim))
            .unwrap_or(true);
    if ok {
        Ok(())
    } else {
        Err(KirsError::contract(format!(
            "{which} table has vectors that disagree with its declared dim {}",
            t.dim
        )))
    }
}

/// Little-endian slice reader shared by the store and checkpoint loaders.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, offset: 0 }
    }

    pub(crate) fn offset(&self) -> usize {
        self.offset
    }

    pub(crate) fn take<const N: usize>(&mut self) -> std::result::Result<[u8; N], StoreError> {
        if self.offset + N > self.bytes.len() {
            return Err(StoreError::Truncated { record: 0 });
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.bytes[self.offset..self.offset + N]);
        self.offset += N;
        Ok(out)
    }

    pub(crate) fn u32(&mut self) -> std::result::Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take::<4>()?))
    }

    pub(crate) fn u64(&mut self) -> std::result::Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.take::<8>()?))
    }

    pub(crate) fn f32(&mut self) -> std::result::Result<f32, StoreError> {
        Ok(f32::from_le_bytes(self.take::<4>()?))
    }

    pub(crate) fn u8(&mut self) -> std::result::Result<u8, StoreError> {
        Ok(self.take::<1>()?[0])
    }
}
