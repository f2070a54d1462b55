//! Compression accounting over a model and its masks.

use crate::error::PruneError;
use crate::mask::MaskMap;
use model_graph::{count_flops, count_weights, ModelGraph};

#[derive(Debug, Clone)]
pub struct LayerCompression {
    pub layer_id: String,
    pub total_weights: u64,
    pub kept_weights: u64,
    pub flops: u64,
    pub kept_flops: u64,
}

#[derive(Debug, Clone)]
pub struct CompressionReport {
    pub per_layer: Vec<LayerCompression>,
    pub total_weights: u64,
    pub kept_weights: u64,
    /// total / kept.
    pub rate: f64,
    pub total_flops: u64,
    pub kept_flops: u64,
    /// Weight fraction held by 3x3 layers — the fraction a kernel-shape-bound
    /// scheme could prune at most.
    pub prunable_fraction: f64,
    /// Best rate achievable when only that fraction is prunable.
    pub pattern_ceiling: f64,
}

/// Ceiling of any scheme restricted to a prunable fraction `f` of the
/// weights: even deleting all of them leaves `1 - f`, so the rate is capped
/// at `1 / (1 - f)`.
pub fn pattern_ceiling(prunable_fraction: f64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&prunable_fraction),
        "fraction must lie in [0, 1]"
    );
    if prunable_fraction >= 1.0 {
        f64::INFINITY
    } else {
        1.0 / (1.0 - prunable_fraction)
    }
}

/// Tallies kept weights and FLOPs under `masks`. Weight layers without a
/// mask count as dense. Kept FLOPs scale each layer's dense FLOPs by its
/// kept-weight fraction, exact for conv/fc where FLOPs are proportional to
/// weights.
pub fn compression_report(model: &ModelGraph, masks: &MaskMap) -> Result<CompressionReport, PruneError> {
    let weights = count_weights(model);
    let flops = count_flops(model, model.input_shape)?;
    // FLOPs cover every layer; weights only conv/fc. Join by id and charge
    // non-weight layers' FLOPs as unprunable.
    let flops_by_id: std::collections::BTreeMap<&str, u64> = flops
        .per_layer
        .iter()
        .map(|l| (l.layer_id.as_str(), l.flops))
        .collect();
    let weight_flops: u64 = weights
        .per_layer
        .iter()
        .map(|l| flops_by_id[l.layer_id.as_str()])
        .sum();
    let mut per_layer = Vec::new();
    let mut kept_weights = 0u64;
    let mut kept_flops = flops.total - weight_flops;
    for lw in &weights.per_layer {
        let layer_flops = flops_by_id[lw.layer_id.as_str()];
        let kept = match masks.get(&lw.layer_id) {
            Some(mask) => {
                mask.validate()?;
                if mask.total_weights() != lw.weights {
                    return Err(PruneError::ShapeMismatch {
                        layer: lw.layer_id.clone(),
                        message: format!(
                            "mask covers {} weights, layer has {}",
                            mask.total_weights(),
                            lw.weights
                        ),
                    });
                }
                mask.kept_weights()
            }
            None => lw.weights,
        };
        let kf = ((layer_flops as f64) * (kept as f64) / (lw.weights as f64)).round() as u64;
        kept_weights += kept;
        kept_flops += kf;
        per_layer.push(LayerCompression {
            layer_id: lw.layer_id.clone(),
            total_weights: lw.weights,
            kept_weights: kept,
            flops: layer_flops,
            kept_flops: kf,
        });
    }
    Ok(CompressionReport {
        per_layer,
        total_weights: weights.total,
        kept_weights,
        rate: weights.total as f64 / kept_weights.max(1) as f64,
        total_flops: flops.total,
        kept_flops,
        prunable_fraction: weights.fraction_3x3,
        pattern_ceiling: pattern_ceiling(weights.fraction_3x3),
    })
}
