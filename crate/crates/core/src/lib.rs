//! Knowledge-infomax recommendation toolkit.
//!
//! The crate pretrains joint semantic + structural entity representations
//! from a knowledge graph, trains a hyperplane preference-connection
//! recommender with a contrastive warm-up, and evaluates both top-K
//! recommendation and KG completion.
//!
//! Module map:
//!
//! - [`kg_data`] — interaction/triple ingestion, filtering, splits, linking
//! - [`hyperplane`] — projection, translation distance, margin loss
//! - [`semantic`] — masked-LM triple encoder and semantic table export
//! - [`structural`] — composition-based graph convolution
//! - [`infomax`] — the persisted `[structural, semantic]` vector store
//! - [`preference`] — user/item/preference hyperplane recommender
//! - [`contrastive`] — warm-up InfoNCE objective
//! - [`trainer`] — staged training pipeline, optimizers, report
//! - [`eval`] — top-K ranking and KG-completion metrics
//! - [`autodiff`] — reverse-mode tape shared by all trainable objectives
//! - [`synth`] — synthetic fixtures for tests and smoke runs

pub mod autodiff;
pub mod contrastive;
pub mod error;
pub mod eval;
pub mod hyperplane;
pub mod infomax;
pub mod kg_data;
pub mod preference;
pub mod semantic;
pub mod structural;
pub mod synth;
pub mod trainer;

pub use error::{KirsError, Result, StoreError};
pub use eval::{CandidatePolicy, MetricReport, RankingResult};
pub use hyperplane::ProjectionVector;
pub use infomax::{EmbeddingTable, InfomaxStore};
pub use kg_data::{DatasetStats, InteractionLog, KnowledgeGraph, Split, Triple};
pub use preference::{Checkpoint, PreferenceState};
pub use trainer::{run_pipeline, AblationFlags, TrainConfig, TrainReport};
