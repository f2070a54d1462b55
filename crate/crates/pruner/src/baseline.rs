//! Baseline pruning schemes used for comparison: unstructured magnitude
//! pruning and whole-filter (row) structured pruning.

use model_graph::WeightTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineScheme {
    /// Keep the largest-magnitude weights anywhere in the layer.
    Unstructured,
    /// Keep whole filters (GEMM rows) with the largest L2 norms.
    FilterStructured,
}

/// Elementwise keep flags over the GEMM view — the common currency all three
/// schemes (including block-punched masks via `to_flat_keep`) reduce to for
/// masked training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementMask {
    pub layer_id: String,
    pub rows: usize,
    pub cols: usize,
    pub keep: Vec<bool>,
}

impl ElementMask {
    pub fn kept_weights(&self) -> u64 {
        self.keep.iter().filter(|&&k| k).count() as u64
    }

    pub fn apply(&self, values: &mut [f32]) {
        for (v, &k) in values.iter_mut().zip(&self.keep) {
            if !k {
                *v = 0.0;
            }
        }
    }
}

/// Prunes one layer at `rate` under the given scheme. A rate of 1 keeps
/// everything. Kept counts are rounded to the nearest weight (unstructured)
/// or filter (structured); at least one filter always survives.
pub fn baseline_prune(weights: &WeightTensor, scheme: BaselineScheme, rate: f64) -> ElementMask {
    let rows = weights.rows();
    let cols = weights.cols();
    let total = rows * cols;
    let mut keep = vec![false; total];
    match scheme {
        BaselineScheme::Unstructured => {
            let kept = ((total as f64 / rate).round() as usize).min(total);
            // Rank indices by |w| descending; ties keep the earlier position.
            let mut order: Vec<usize> = (0..total).collect();
            order.sort_by(|&a, &b| {
                let ma = weights.values[a].abs();
                let mb = weights.values[b].abs();
                mb.partial_cmp(&ma).expect("weights are finite").then(a.cmp(&b))
            });
            for &i in &order[..kept] {
                keep[i] = true;
            }
        }
        BaselineScheme::FilterStructured => {
            let kept_rows = (((rows as f64) / rate).round() as usize).clamp(1, rows);
            let mut order: Vec<usize> = (0..rows).collect();
            let norm = |r: usize| -> f64 {
                weights.gemm_row(r).iter().map(|&w| (w as f64) * (w as f64)).sum()
            };
            order.sort_by(|&a, &b| {
                norm(b).partial_cmp(&norm(a)).expect("weights are finite").then(a.cmp(&b))
            });
            for &r in &order[..kept_rows] {
                keep[r * cols..(r + 1) * cols].fill(true);
            }
        }
    }
    ElementMask {
        layer_id: weights.layer_id.clone(),
        rows,
        cols,
        keep,
    }
}
