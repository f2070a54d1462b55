//! Compact storage and fast kernels for block-punched sparse weights.
//!
//! A pruned layer keeps whole columns inside each block of its GEMM view,
//! so every row of a block band shares one short list of surviving column
//! indices. The [`PackedSparseLayer`] encoding stores that list once per
//! block — a `u8` count plus `u8` in-block locals — instead of per row,
//! which is what lets the index side undercut classic per-row formats as
//! soon as the layer is even moderately sparse.
//!
//! On top of the encoding sit:
//!
//! - a serializable container holding every packed layer of a model
//!   ([`write_packed`] / [`read_packed`]);
//! - [`reorder_blocks`], which permutes block bands so heavy bands come
//!   first, evening out per-thread work without changing results;
//! - the compute kernels [`sparse_gemm`] / [`sparse_conv`], tiled over
//!   rows and batch columns and parallelized across block bands. Each
//!   output element accumulates its kept columns in ascending global
//!   column order, so results are bitwise identical regardless of tile
//!   sizes, worker counts, or band permutation;
//! - an autotuner ([`Tuner`]) that times candidate tilings per layer
//!   shape and caches the winner;
//! - [`run_model`], which executes a whole model from its packed layers,
//!   running branch structures on two concurrent lanes according to a
//!   scheduler's assignment.

mod conv;
mod error;
mod format;
mod gemm;
mod packed;
mod reorder;
mod run;
mod tune;

pub use conv::{im2col, sparse_conv, ConvOutput};
pub use error::SparseError;
pub use format::{
    load_packed, read_packed, save_packed, write_packed, PackedModel, PACKED_MAGIC, PACKED_VERSION,
};
pub use gemm::{available_workers, sparse_gemm, sparse_gemm_counted, TuningConfig};
pub use packed::{decode, encode, PackedSparseLayer};
pub use reorder::reorder_blocks;
pub use run::{run_model, BranchAssignments, Feature, Lane, RunResult, TraceEvent};
pub use tune::{candidate_configs, DeviceClass, Tuner};
