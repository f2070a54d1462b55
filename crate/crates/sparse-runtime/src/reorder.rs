//! Band reordering for workload regularity.
//!
//! Bands with similar kept-column counts end up adjacent, so parallel
//! workers pulling consecutive bands see similar amounts of work. Only the
//! physical storage order changes: the recorded permutation routes every
//! output row back to its original position, and `decode` is unaffected.

use crate::packed::PackedSparseLayer;

/// Sorts bands by descending kept-column count (stable: equal counts keep
/// their relative order). Returns a layer that decodes identically.
pub fn reorder_blocks(packed: &PackedSparseLayer) -> PackedSparseLayer {
    let grid = packed.grid();
    let cb = grid.col_blocks;

    // Kept columns per *physical* band, then a stable descending sort of the
    // physical positions. Composing with the existing order keeps repeated
    // reordering idempotent.
    let band_kept: Vec<usize> = (0..grid.bands)
        .map(|p| {
            packed.counts[p * cb..(p + 1) * cb]
                .iter()
                .map(|&c| c as usize)
                .sum()
        })
        .collect();
    let mut physical: Vec<usize> = (0..grid.bands).collect();
    physical.sort_by_key(|&p| std::cmp::Reverse(band_kept[p]));

    let mut out = PackedSparseLayer {
        layer_id: packed.layer_id.clone(),
        dims: packed.dims,
        cfg: packed.cfg,
        block_order: Vec::with_capacity(grid.bands),
        counts: Vec::with_capacity(packed.counts.len()),
        locals: Vec::with_capacity(packed.locals.len()),
        offsets: Vec::with_capacity(packed.offsets.len()),
        values: Vec::with_capacity(packed.values.len()),
    };
    out.offsets.push(0);

    // Per-block local-index start positions in the source layer.
    let mut local_starts = Vec::with_capacity(packed.counts.len() + 1);
    local_starts.push(0usize);
    for &c in &packed.counts {
        local_starts.push(local_starts.last().unwrap() + c as usize);
    }

    for &p in &physical {
        out.block_order.push(packed.block_order[p]);
        for t in p * cb..(p + 1) * cb {
            out.counts.push(packed.counts[t]);
            out.locals
                .extend_from_slice(&packed.locals[local_starts[t]..local_starts[t + 1]]);
            out.values.extend_from_slice(
                &packed.values[packed.offsets[t] as usize..packed.offsets[t + 1] as usize],
            );
            out.offsets.push(out.values.len() as u32);
        }
    }
    debug_assert!(out.validate().is_ok());
    out
}
