//! Block-punched pruning: reweighted-regularization sparsification with hard
//! projection, plus baselines and compression accounting.
//!
//! A layer's weights are viewed as an M x C matrix (C = in_channels x kernel
//! positions) divided into gm x gn blocks. The pruned unit is a column
//! within one block — "punched through" all of the block's rows — so kernels
//! of any size compress uniformly and the sparse runtime can skip whole
//! column groups. Sparsification runs as several rounds of training with a
//! group-Lasso-style penalty whose per-group weight is the inverse of the
//! group's current squared norm (weak groups are pushed down harder each
//! round), followed by top-k projection onto per-layer budgets and masked
//! fine-tuning.

mod baseline;
mod block;
mod budget;
mod data;
mod error;
mod mask;
mod net;
mod project;
mod report;
mod reweight;
mod train;

pub use baseline::{baseline_prune, BaselineScheme, ElementMask};
pub use block::{grid_for, partition_blocks, BlockConfig, BlockGrid};
pub use budget::{allocate_budgets, BudgetPlan, CompressionTarget, LayerBudget};
pub use data::{
    gen_synthetic, load_dataset, read_dataset, save_dataset, write_dataset, Dataset,
    DATASET_MAGIC, DATASET_VERSION, IMAGE_PIXELS, IMAGE_SIDE, NUM_CLASSES,
};
pub use error::PruneError;
pub use mask::{
    load_masks, read_masks, save_masks, write_masks, MaskMap, PruneMask, MASK_MAGIC, MASK_VERSION,
};
pub use net::{ChainNet, NetLayer, NetOp};
pub use project::{project_mask, project_mask_weights};
pub use report::{compression_report, pattern_ceiling, CompressionReport, LayerCompression};
pub use reweight::{
    add_regularizer_gradient, group_norms, layer_regularizer, regularized_loss, update_penalties,
    GroupNorms, ReweightState,
};
pub use train::{
    evaluate, evaluate_scheme, init_weights, reweighted_prune, train_dense, HyperParams,
    PruneDiagnostics, PruneOutcome, Scheme,
};

pub type Result<T> = std::result::Result<T, PruneError>;
