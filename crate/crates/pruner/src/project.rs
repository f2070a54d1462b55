//! Hard projection: top-k selection of block-column groups by group norm.

use crate::block::BlockConfig;
use crate::mask::PruneMask;
use crate::reweight::group_norms;
use model_graph::WeightTensor;

/// One (band, column) group with its rank key.
#[derive(Debug, Clone, Copy)]
struct RankedGroup {
    band: usize,
    col: usize,
    norm_sq: f64,
    /// Weights in this group = rows of its band.
    rows: usize,
}

/// All groups of a layer sorted by descending norm; ties keep the lower
/// column index, then the lower band, so projection is deterministic.
fn ranked_groups(weights: &WeightTensor, cfg: BlockConfig) -> Vec<RankedGroup> {
    let norms = group_norms(weights, cfg);
    let grid = norms.grid;
    let mut groups = Vec::with_capacity(grid.group_count());
    for band in 0..grid.bands {
        let rows = grid.band_rows(band).len();
        for col in 0..grid.cols {
            groups.push(RankedGroup {
                band,
                col,
                norm_sq: norms.at(band, col),
                rows,
            });
        }
    }
    groups.sort_by(|a, b| {
        b.norm_sq
            .partial_cmp(&a.norm_sq)
            .expect("group norms are finite")
            .then(a.col.cmp(&b.col))
            .then(a.band.cmp(&b.band))
    });
    groups
}

fn mask_from_groups(weights: &WeightTensor, cfg: BlockConfig, kept: &[RankedGroup]) -> PruneMask {
    let grid = crate::block::partition_blocks(weights, cfg);
    let mut per_band: Vec<Vec<u32>> = vec![Vec::new(); grid.bands];
    for g in kept {
        per_band[g.band].push(g.col as u32);
    }
    for band in &mut per_band {
        band.sort_unstable();
    }
    PruneMask {
        layer_id: weights.layer_id.clone(),
        rows: weights.rows(),
        cols: weights.cols(),
        cfg,
        kept: per_band,
    }
}

/// Keeps the `kept_columns` groups with the largest squared group norms,
/// ranked across the whole layer.
pub fn project_mask(weights: &WeightTensor, cfg: BlockConfig, kept_columns: usize) -> PruneMask {
    let groups = ranked_groups(weights, cfg);
    let k = kept_columns.min(groups.len());
    mask_from_groups(weights, cfg, &groups[..k])
}

/// Keeps the ranked prefix whose total weight count lands closest to
/// `weight_budget`. With uniform band heights this is exactly
/// `project_mask(round(budget / band_height))`; with a ragged final band it
/// still selects a prefix of the same ranking, so top-k semantics are
/// preserved.
pub fn project_mask_weights(
    weights: &WeightTensor,
    cfg: BlockConfig,
    weight_budget: u64,
) -> PruneMask {
    let groups = ranked_groups(weights, cfg);
    let mut best_k = 0usize;
    let mut best_err = weight_budget; // error of keeping nothing
    let mut kept = 0u64;
    for (i, g) in groups.iter().enumerate() {
        kept += g.rows as u64;
        let err = kept.abs_diff(weight_budget);
        // Strict improvement only: on a tie prefer the smaller (sparser) prefix.
        if err < best_err {
            best_err = err;
            best_k = i + 1;
        }
        if kept >= weight_budget {
            break;
        }
    }
    mask_from_groups(weights, cfg, &groups[..best_k])
}
