//! Group norms, reweighted penalties, and the regularized objective.
//!
//! The penalty group is one punched unit: a column within a block row-band.
//! Groups are addressed as (band, global column); the flat index is
//! `band * C + column`, giving `bands x C` values per layer.

use std::collections::BTreeMap;

use crate::block::{partition_blocks, BlockConfig, BlockGrid};
use model_graph::WeightTensor;

/// Squared Frobenius norms of every (band, column) group of one layer, in
/// flat `band * C + column` order.
#[derive(Debug, Clone)]
pub struct GroupNorms {
    pub grid: BlockGrid,
    pub values: Vec<f64>,
}

impl GroupNorms {
    pub fn index(&self, band: usize, col: usize) -> usize {
        band * self.grid.cols + col
    }

    pub fn at(&self, band: usize, col: usize) -> f64 {
        self.values[self.index(band, col)]
    }
}

/// Sums `w^2` down each block column. The grand total over all groups equals
/// the squared Frobenius norm of the tensor.
pub fn group_norms(weights: &WeightTensor, cfg: BlockConfig) -> GroupNorms {
    let grid = partition_blocks(weights, cfg);
    let mut values = vec![0.0f64; grid.group_count()];
    for band in 0..grid.bands {
        let base = band * grid.cols;
        for row in grid.band_rows(band) {
            for (col, &w) in weights.gemm_row(row).iter().enumerate() {
                values[base + col] += (w as f64) * (w as f64);
            }
        }
    }
    GroupNorms { grid, values }
}

/// Per-group penalties and the round bookkeeping of the reweighting loop.
#[derive(Debug, Clone)]
pub struct ReweightState {
    /// Per layer, flat (band, column) penalty values.
    pub alphas: BTreeMap<String, Vec<f64>>,
    pub epsilon: f64,
    pub lambda: f64,
    pub round: usize,
}

impl ReweightState {
    pub fn new(epsilon: f64, lambda: f64) -> Self {
        assert!(epsilon > 0.0, "epsilon must be positive");
        ReweightState {
            alphas: BTreeMap::new(),
            epsilon,
            lambda,
            round: 0,
        }
    }
}

/// The reweighting rule: `alpha_g = 1 / (norm2_g + epsilon)`. Zero-norm
/// groups get the maximal penalty `1/epsilon`; alpha is finite and positive
/// for any finite weights.
pub fn update_penalties(state: &mut ReweightState, layer_id: &str, norms: &GroupNorms) {
    let eps = state.epsilon;
    let alphas = norms.values.iter().map(|&n| 1.0 / (n + eps)).collect();
    state.alphas.insert(layer_id.to_string(), alphas);
}

/// Regularizer value for one layer: `lambda * sum_g alpha_g * norm2_g`.
pub fn layer_regularizer(state: &ReweightState, layer_id: &str, norms: &GroupNorms) -> f64 {
    let alphas = &state.alphas[layer_id];
    state.lambda
        * norms
            .values
            .iter()
            .zip(alphas)
            .map(|(n, a)| a * n)
            .sum::<f64>()
}

/// Full objective: task loss plus the regularizer summed over all layers in
/// `weights`. Layers without a penalty entry contribute nothing (alpha is
/// installed by [`update_penalties`] at round start).
pub fn regularized_loss(
    weights: &BTreeMap<String, WeightTensor>,
    task_loss: f64,
    state: &ReweightState,
    cfg: BlockConfig,
) -> f64 {
    let mut total = task_loss;
    for (id, tensor) in weights {
        if state.alphas.contains_key(id) {
            total += layer_regularizer(state, id, &group_norms(tensor, cfg));
        }
    }
    total
}

/// Adds the regularizer gradient `2 * lambda * alpha_g * w` for every weight
/// of one layer onto `grad` (flat GEMM-view row-major, f64).
pub fn add_regularizer_gradient(
    state: &ReweightState,
    layer_id: &str,
    weights_flat: &[f64],
    rows: usize,
    cols: usize,
    cfg: BlockConfig,
    grad: &mut [f64],
) {
    let Some(alphas) = state.alphas.get(layer_id) else {
        return;
    };
    let scale = 2.0 * state.lambda;
    for row in 0..rows {
        let band = row / cfg.gm;
        let base = band * cols;
        for col in 0..cols {
            let w = weights_flat[row * cols + col];
            grad[row * cols + col] += scale * alphas[base + col] * w;
        }
    }
}
