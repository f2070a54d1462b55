use crate::graph::ModelGraph;
use crate::layer::LayerKind;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub layer_id: String,
    pub weights: u64,
    pub is_3x3: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightCount {
    pub per_layer: Vec<LayerWeights>,
    pub total: u64,
    /// Fraction of all weights held by 3x3 conv layers (0 if the model has no
    /// weights).
    pub fraction_3x3: f64,
}

/// Sums `filters * in_channels * kh * kw` over the weight layers.
pub fn count_weights(model: &ModelGraph) -> WeightCount {
    let mut per_layer = Vec::new();
    let mut total = 0u64;
    let mut total_3x3 = 0u64;
    for layer in model.weight_layers() {
        let shape = layer.weight_shape.as_ref().unwrap();
        let weights = shape.weight_count();
        let is_3x3 = shape.is_3x3();
        total += weights;
        if is_3x3 {
            total_3x3 += weights;
        }
        per_layer.push(LayerWeights {
            layer_id: layer.id.clone(),
            weights,
            is_3x3,
        });
    }
    let fraction_3x3 = if total == 0 {
        0.0
    } else {
        total_3x3 as f64 / total as f64
    };
    WeightCount {
        per_layer,
        total,
        fraction_3x3,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerFlops {
    pub layer_id: String,
    pub flops: u64,
    pub is_3x3: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlopCount {
    pub per_layer: Vec<LayerFlops>,
    pub total: u64,
    pub fraction_3x3: f64,
    pub fraction_other: f64,
}

/// Counts one multiply-accumulate as 2 FLOPs. Conv layers cost
/// `2 * M * N * Kh * Kw * Hout * Wout`, fc layers `2 * M * N`, pointwise
/// add/mul one FLOP per output element, and the remaining kinds are free.
pub fn count_flops(model: &ModelGraph, input_shape: (usize, usize, usize)) -> Result<FlopCount> {
    let mut model = model.clone();
    model.input_shape = input_shape;
    let shapes = model.infer_shapes()?;
    let mut per_layer = Vec::new();
    let mut total = 0u64;
    let mut total_3x3 = 0u64;
    for layer in &model.layers {
        let (c, h, w) = shapes[layer.id.as_str()];
        let (flops, is_3x3) = match layer.kind {
            LayerKind::Conv | LayerKind::Fc => {
                let shape = layer.weight_shape.as_ref().unwrap();
                let elems = (h * w) as u64;
                (2 * shape.weight_count() * elems, shape.is_3x3())
            }
            LayerKind::PointwiseAdd | LayerKind::PointwiseMul => ((c * h * w) as u64, false),
            LayerKind::Concat | LayerKind::Upsample | LayerKind::TransposeReshape => (0, false),
        };
        total += flops;
        if is_3x3 {
            total_3x3 += flops;
        }
        per_layer.push(LayerFlops {
            layer_id: layer.id.clone(),
            flops,
            is_3x3,
        });
    }
    let (fraction_3x3, fraction_other) = if total == 0 {
        (0.0, 0.0)
    } else {
        let f = total_3x3 as f64 / total as f64;
        (f, 1.0 - f)
    };
    Ok(FlopCount {
        per_layer,
        total,
        fraction_3x3,
        fraction_other,
    })
}
