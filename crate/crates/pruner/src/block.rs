//! Block partition of a layer's 2-D GEMM view.
//!
//! A layer's weights, viewed as an M x C matrix, are divided into a grid of
//! `gm x gn` blocks. Edge blocks are allowed to be smaller than the nominal
//! size rather than padding the matrix, so weight counts stay exact. The
//! pruned unit is a *column within one block*: either all rows of a block
//! keep a column, or all of them lose it. Because every block in a row-band
//! spans the same rows, a "group" is conveniently addressed as (band, global
//! column).

use crate::error::PruneError;
use model_graph::WeightTensor;

/// Nominal block dimensions over the GEMM view: `gm` filters (rows) by `gn`
/// columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockConfig {
    pub gm: usize,
    pub gn: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig { gm: 8, gn: 4 }
    }
}

impl BlockConfig {
    pub fn new(gm: usize, gn: usize) -> Result<Self, PruneError> {
        // gn is capped at 255 so per-block column indices and kept counts fit
        // one byte each in the packed storage format.
        if gm == 0 || gn == 0 || gn > 255 {
            return Err(PruneError::InfeasibleTarget {
                message: format!("block config {gm}x{gn} outside 1..=255 range"),
            });
        }
        Ok(BlockConfig { gm, gn })
    }
}

/// The block grid a `(M, C)` matrix splits into under a [`BlockConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub col_blocks: usize,
    pub cfg: BlockConfig,
}

impl BlockGrid {
    /// Rows covered by row-band `band` (the last band may be ragged).
    pub fn band_rows(&self, band: usize) -> std::ops::Range<usize> {
        let start = band * self.cfg.gm;
        start..(start + self.cfg.gm).min(self.rows)
    }

    /// Columns covered by column-block `cb` (the last may be ragged).
    pub fn block_cols(&self, cb: usize) -> std::ops::Range<usize> {
        let start = cb * self.cfg.gn;
        start..(start + self.cfg.gn).min(self.cols)
    }

    pub fn band_of_row(&self, row: usize) -> usize {
        row / self.cfg.gm
    }

    pub fn block_of_col(&self, col: usize) -> usize {
        col / self.cfg.gn
    }

    /// Total number of (band, column) groups.
    pub fn group_count(&self) -> usize {
        self.bands * self.cols
    }
}

/// Computes the block grid for a weight tensor. Every weight belongs to
/// exactly one block; edge blocks shrink instead of padding.
pub fn partition_blocks(weights: &WeightTensor, cfg: BlockConfig) -> BlockGrid {
    grid_for(weights.rows(), weights.cols(), cfg)
}

pub fn grid_for(rows: usize, cols: usize, cfg: BlockConfig) -> BlockGrid {
    BlockGrid {
        rows,
        cols,
        bands: rows.div_ceil(cfg.gm),
        col_blocks: cols.div_ceil(cfg.gn),
        cfg,
    }
}
