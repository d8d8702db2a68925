//! Staged training: semantic pretraining, structural pretraining, Infomax
//! assembly, contrastive warm-up, the one-shot augmentation update, main
//! BPR training with early stopping — plus the optimizers and the report.

mod optim;
mod pipeline;

pub use optim::{Adagrad, AdamW, OptimizerKind};
pub use pipeline::{run_pipeline, PipelineData, PipelineOutput};

use crate::error::{KirsError, Result};
use crate::semantic::SemanticTrainConfig;
use crate::structural::GcnConfig;

/// Which representation stages are active. The named variants follow the
/// ablation family: `se` drops the semantic half, `st` the structural
/// half, `fi` skips language-model fine-tuning, `in` drops Infomax and the
/// contrastive warm-up entirely.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct AblationFlags {
    pub use_semantic: bool,
    pub use_structural: bool,
    pub use_finetuned_lm: bool,
    pub use_contrastive: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            use_semantic: true,
            use_structural: true,
            use_finetuned_lm: true,
            use_contrastive: true,
        }
    }
}

impl AblationFlags {
    pub fn from_tag(tag: &str) -> Result<Self> {
        let mut f = AblationFlags::default();
        match tag {
            "se" => f.use_semantic = false,
            "st" => f.use_structural = false,
            "fi" => f.use_finetuned_lm = false,
            "in" => {
                f.use_semantic = false;
                f.use_structural = false;
                f.use_contrastive = false;
            }
            "none" => {}
            other => {
                return Err(KirsError::Config(format!(
                    "unknown ablation '{other}' (expected se, st, fi, in, none)"
                )))
            }
        }
        Ok(f)
    }

    pub fn uses_infomax(&self) -> bool {
        self.use_semantic || self.use_structural
    }
}

/// Hyperparameters of the two-part schedule. Defaults are the selected
/// values of the reference configuration.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    /// X_w: warm-up epochs optimizing BPR + InfoNCE.
    pub warmup_epochs: usize,
    /// X: total epoch budget (warm-up + main).
    pub max_epochs: usize,
    pub patience: usize,
    /// γ of the margin ranking loss.
    pub margin: f64,
    /// τ of the contrastive density ratio.
    pub temperature: f64,
    /// In-batch negatives per anchor for InfoNCE.
    pub contrastive_negatives: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub ablation: AblationFlags,
    /// Validation cutoff for early stopping (Precision@K).
    pub eval_k: usize,
    pub structural: GcnConfig,
    pub semantic: SemanticTrainConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.005,
            l2: 1e-5,
            batch_size: 1024,
            warmup_epochs: 2,
            max_epochs: 50,
            patience: 3,
            margin: 1.0,
            temperature: 0.3,
            contrastive_negatives: crate::contrastive::DEFAULT_NEGATIVES,
            seed: 0,
            optimizer: OptimizerKind::Adagrad,
            ablation: AblationFlags::default(),
            eval_k: 10,
            structural: GcnConfig::default(),
            semantic: SemanticTrainConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_epochs >= self.max_epochs {
            return Err(KirsError::Config(format!(
                "warm-up epochs ({}) must be below the total budget ({})",
                self.warmup_epochs, self.max_epochs
            )));
        }
        if self.patience == 0 {
            return Err(KirsError::Config("patience must be at least 1".into()));
        }
        if self.learning_rate <= 0.0 || self.temperature <= 0.0 || self.margin <= 0.0 {
            return Err(KirsError::Config(
                "learning rate, temperature and margin must be positive".into(),
            ));
        }
        self.structural.validate()?;
        Ok(())
    }

    /// Embedding dimension of the recommender: structural + semantic width.
    pub fn embedding_dim(&self) -> usize {
        self.structural.dim + self.semantic.backend.hidden
    }
}

/// True iff the best validation value lies `patience` or more epochs in
/// the past. Ties are not improvements: the earliest occurrence of the
/// best value counts.
pub fn early_stop(history: &[f64], patience: usize) -> bool {
    if history.is_empty() {
        return false;
    }
    let mut best = 0usize;
    for (i, &v) in history.iter().enumerate() {
        if v > history[best] {
            best = i;
        }
    }
    history.len() - 1 - best >= patience
}

/// Which pipeline stage an epoch row belongs to.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum StageKind {
    PretrainSemantic,
    PretrainStructural,
    BuildInfomax,
    WarmUp,
    InfomaxUpdate,
    MainTraining,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::PretrainSemantic => "pretrain-semantic",
            StageKind::PretrainStructural => "pretrain-structural",
            StageKind::BuildInfomax => "build-infomax",
            StageKind::WarmUp => "warm-up",
            StageKind::InfomaxUpdate => "infomax-update",
            StageKind::MainTraining => "main-training",
        }
    }
}

/// One completed epoch of any stage.
#[derive(Clone, Debug)]
pub struct EpochRow {
    pub stage: StageKind,
    pub epoch: usize,
    pub loss_g: Option<f64>,
    pub loss_com: Option<f64>,
    pub loss_w: Option<f64>,
    pub loss_r: Option<f64>,
    pub val_precision: Option<f64>,
}

/// Execution record of one pipeline run.
#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    /// Stages in execution order.
    pub stages: Vec<StageKind>,
    pub epochs: Vec<EpochRow>,
    pub stop_epoch: usize,
    pub wall_time_secs: f64,
}

impl TrainReport {
    /// UTF-8 comma-separated rows with a header.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut out = String::from("stage,epoch,loss_g,loss_com,loss_w,loss_r,val_precision\n");
        for row in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.stage.name(),
                row.epoch,
                fmt(row.loss_g),
                fmt(row.loss_com),
                fmt(row.loss_w),
                fmt(row.loss_r),
                fmt(row.val_precision),
            ));
        }
        out
    }

    pub fn stage_names(&self) -> Vec<&'static str> {
        self.stages.iter().map(|s| s.name()).collect()
    }
}
