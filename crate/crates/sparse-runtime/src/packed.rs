//! Compact storage for a block-punched layer.
//!
//! The GEMM view of a layer (M filters by C kernel-position columns) is cut
//! into `gm x gn` blocks; pruning keeps whole columns within each block. The
//! packed form stores, per block, one byte for the kept-column count and one
//! byte per kept column — a column index is shared by every row of the
//! block's band, which is what makes the index arrays smaller than CSR's
//! per-element column indices at punched sparsities.
//!
//! Values are laid out in (block, column, row) order: each kept column of a
//! block contributes a contiguous run of `band_rows` values. Blocks are
//! stored band-by-band in *physical* order; `block_order` records which
//! original band sits at each physical position, so a reordered layer decodes
//! to exactly the same dense tensor (see [`crate::reorder_blocks`]).

use model_graph::WeightTensor;
use pruner::{BlockConfig, BlockGrid, PruneMask};

use crate::error::SparseError;

#[derive(Debug, Clone, PartialEq)]
pub struct PackedSparseLayer {
    pub layer_id: String,
    /// Dense dims `(filters, in_channels, kh, kw)`; the GEMM view is
    /// `filters` x `in_channels*kh*kw`.
    pub dims: (usize, usize, usize, usize),
    pub cfg: BlockConfig,
    /// `block_order[p]` is the original band held at physical position `p`.
    pub block_order: Vec<u32>,
    /// Kept-column count per block, physical band-major then column-block.
    pub counts: Vec<u8>,
    /// Concatenated in-block column indices, strictly increasing per block.
    pub locals: Vec<u8>,
    /// Start of each block's value run; `offsets[t+1] - offsets[t]` equals
    /// `counts[t] * band_rows`. One extra entry holds the total.
    pub offsets: Vec<u32>,
    pub values: Vec<f32>,
}

impl PackedSparseLayer {
    /// Rows of the GEMM view.
    pub fn rows(&self) -> usize {
        self.dims.0
    }

    /// Columns of the GEMM view.
    pub fn cols(&self) -> usize {
        self.dims.1 * self.dims.2 * self.dims.3
    }

    pub fn grid(&self) -> BlockGrid {
        grid_of(self.rows(), self.cols(), self.cfg)
    }

    /// Blocks per band (column-blocks).
    pub fn col_blocks(&self) -> usize {
        self.grid().col_blocks
    }

    /// Kept weights across all blocks.
    pub fn kept_weights(&self) -> u64 {
        self.values.len() as u64
    }

    /// Bytes this layer spends on locating its values: per-block counts,
    /// in-block column indices, and the band permutation. Value bytes and
    /// fixed header fields are excluded — the comparison of interest is
    /// against an index structure (CSR) holding the same nonzeros.
    pub fn index_bytes(&self) -> u64 {
        (self.counts.len() + self.locals.len() + 2 * self.block_order.len()) as u64
    }

    /// Checks every structural invariant. Cheap relative to any use of the
    /// layer; run after construction from untrusted bytes.
    pub fn validate(&self) -> Result<(), SparseError> {
        let fail = |message: String| SparseError::CorruptLayer {
            layer: self.layer_id.clone(),
            message,
        };
        let (m, c) = (self.rows(), self.cols());
        if m == 0 || c == 0 {
            return Err(fail("empty dimensions".into()));
        }
        let grid = self.grid();
        let tiles = grid.bands * grid.col_blocks;

        if self.block_order.len() != grid.bands {
            return Err(fail(format!(
                "permutation covers {} bands, grid has {}",
                self.block_order.len(),
                grid.bands
            )));
        }
        let mut seen = vec![false; grid.bands];
        for &b in &self.block_order {
            match seen.get_mut(b as usize) {
                Some(s) if !*s => *s = true,
                _ => return Err(fail(format!("band permutation repeats or exceeds {b}"))),
            }
        }

        if self.counts.len() != tiles {
            return Err(fail(format!(
                "{} block counts for {} blocks",
                self.counts.len(),
                tiles
            )));
        }
        if self.offsets.len() != tiles + 1 || self.offsets[0] != 0 {
            return Err(fail("offsets must start at 0 and cover every block".into()));
        }

        let mut local_at = 0usize;
        for p in 0..grid.bands {
            let band = self.block_order[p] as usize;
            let band_rows = grid.band_rows(band).len();
            for cb in 0..grid.col_blocks {
                let t = p * grid.col_blocks + cb;
                let count = self.counts[t] as usize;
                let width = grid.block_cols(cb).len();
                if count > width {
                    return Err(fail(format!(
                        "block ({band},{cb}) keeps {count} of {width} columns"
                    )));
                }
                let run = self.offsets[t + 1].checked_sub(self.offsets[t]);
                if run != Some((count * band_rows) as u32) {
                    return Err(fail(format!(
                        "block ({band},{cb}) offsets disagree with count {count} x {band_rows} rows"
                    )));
                }
                let locals = self
                    .locals
                    .get(local_at..local_at + count)
                    .ok_or_else(|| fail("index array shorter than counts imply".into()))?;
                for pair in locals.windows(2) {
                    if pair[1] <= pair[0] {
                        return Err(fail(format!(
                            "block ({band},{cb}) indices not strictly increasing"
                        )));
                    }
                }
                if let Some(&last) = locals.last() {
                    if last as usize >= width {
                        return Err(fail(format!(
                            "block ({band},{cb}) index {last} outside width {width}"
                        )));
                    }
                }
                local_at += count;
            }
        }
        if local_at != self.locals.len() {
            return Err(fail("index array longer than counts imply".into()));
        }
        if self.values.len() != *self.offsets.last().unwrap() as usize {
            return Err(fail(format!(
                "{} values but offsets end at {}",
                self.values.len(),
                self.offsets.last().unwrap()
            )));
        }
        Ok(())
    }
}

pub(crate) fn grid_of(rows: usize, cols: usize, cfg: BlockConfig) -> BlockGrid {
    BlockGrid {
        rows,
        cols,
        bands: rows.div_ceil(cfg.gm),
        col_blocks: cols.div_ceil(cfg.gn),
        cfg,
    }
}

/// Packs the masked weights of one layer. The mask's block config decides
/// the geometry; bands come out in their original order (identity
/// permutation) — reorder separately if execution wants it.
pub fn encode(weights: &WeightTensor, mask: &PruneMask) -> Result<PackedSparseLayer, SparseError> {
    mask.validate()?;
    if weights.rows() != mask.rows || weights.cols() != mask.cols {
        return Err(SparseError::MaskShape {
            layer: weights.layer_id.clone(),
            wr: weights.rows(),
            wc: weights.cols(),
            mr: mask.rows,
            mc: mask.cols,
        });
    }

    let grid = grid_of(mask.rows, mask.cols, mask.cfg);
    let tiles = grid.bands * grid.col_blocks;
    let mut counts = Vec::with_capacity(tiles);
    let mut locals = Vec::new();
    let mut offsets = Vec::with_capacity(tiles + 1);
    let mut values = Vec::new();
    offsets.push(0u32);

    for band in 0..grid.bands {
        let rows = grid.band_rows(band);
        for cb in 0..grid.col_blocks {
            let block_locals = mask.local_indices(band, cb);
            counts.push(block_locals.len() as u8);
            let base = cb * mask.cfg.gn;
            for &local in &block_locals {
                let col = base + local as usize;
                for row in rows.clone() {
                    values.push(weights.at(row, col));
                }
            }
            locals.extend_from_slice(&block_locals);
            offsets.push(values.len() as u32);
        }
    }

    let packed = PackedSparseLayer {
        layer_id: weights.layer_id.clone(),
        dims: weights.dims,
        cfg: mask.cfg,
        block_order: (0..grid.bands as u32).collect(),
        counts,
        locals,
        offsets,
        values,
    };
    debug_assert!(packed.validate().is_ok());
    Ok(packed)
}

/// Reconstructs the masked dense tensor: kept weights in place, everything
/// else exactly zero. Inverse of [`encode`] for any block order.
pub fn decode(packed: &PackedSparseLayer) -> Result<WeightTensor, SparseError> {
    packed.validate()?;
    let grid = packed.grid();
    let cols = packed.cols();
    let mut dense = WeightTensor::zeros(packed.layer_id.clone(), packed.dims);

    let mut local_at = 0usize;
    for p in 0..grid.bands {
        let band = packed.block_order[p] as usize;
        let rows = grid.band_rows(band);
        for cb in 0..grid.col_blocks {
            let t = p * grid.col_blocks + cb;
            let count = packed.counts[t] as usize;
            let mut at = packed.offsets[t] as usize;
            for &local in &packed.locals[local_at..local_at + count] {
                let col = cb * packed.cfg.gn + local as usize;
                for row in rows.clone() {
                    dense.values[row * cols + col] = packed.values[at];
                    at += 1;
                }
            }
            local_at += count;
        }
    }
    Ok(dense)
}
