//! Minimal dense training facility: forward and reverse passes for chains of
//! conv/fc layers with interleaved ReLU and a softmax-cross-entropy head.
//!
//! Everything runs in f64 so finite-difference gradient checks resolve well
//! below the 1e-4 gate; weights convert to/from the f32 storage types at the
//! boundary. Only single-input chains are supported — the branched reference
//! topologies are never trained, just counted and scheduled.

use std::collections::BTreeMap;

use crate::error::PruneError;
use model_graph::{LayerKind, ModelGraph, WeightMap, WeightTensor};

#[derive(Debug, Clone)]
pub enum NetOp {
    Conv {
        in_shape: (usize, usize, usize),
        out_shape: (usize, usize, usize),
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
    },
    Fc,
}

#[derive(Debug, Clone)]
pub struct NetLayer {
    pub id: String,
    pub op: NetOp,
    /// GEMM-view rows (filters).
    pub rows: usize,
    /// GEMM-view columns (in_channels x kernel positions).
    pub cols: usize,
    /// Row-major rows x cols weights.
    pub weights: Vec<f64>,
    /// ReLU applied after this layer (every layer but the last).
    pub relu: bool,
}

#[derive(Debug, Clone)]
pub struct ChainNet {
    pub layers: Vec<NetLayer>,
    pub input_shape: (usize, usize, usize),
}

impl ChainNet {
    /// Builds the trainable chain from a model and its weights. Fails on
    /// branching, non-weight layers, or missing tensors.
    pub fn from_model(model: &ModelGraph, weights: &WeightMap) -> Result<Self, PruneError> {
        let order = model.topo_order()?;
        let shapes = model.infer_shapes()?;
        let mut layers = Vec::new();
        let mut prev_id: Option<String> = None;
        let mut prev_shape = model.input_shape;
        for index in order {
            let spec = &model.layers[index];
            let id = &spec.id;
            if !spec.kind.has_weights() {
                return Err(PruneError::UnsupportedModel {
                    layer: id.clone(),
                    reason: format!("`{}` layers cannot be trained", spec.kind),
                });
            }
            let expected = prev_id.as_deref().map(|p| vec![p.to_string()]).unwrap_or_default();
            if spec.inputs != expected {
                return Err(PruneError::UnsupportedModel {
                    layer: id.clone(),
                    reason: "model is not a single-input chain".into(),
                });
            }
            let tensor = weights.get(id).ok_or_else(|| PruneError::MissingWeights {
                layer: id.clone(),
            })?;
            let shape = spec.weight_shape.expect("weight layers carry a shape");
            let out_shape = shapes[id.as_str()];
            let op = match spec.kind {
                LayerKind::Conv => NetOp::Conv {
                    in_shape: prev_shape,
                    out_shape,
                    kernel: (shape.kernel_h, shape.kernel_w),
                    stride: spec.stride,
                    padding: spec.padding,
                },
                LayerKind::Fc => NetOp::Fc,
                _ => unreachable!("has_weights covers conv/fc only"),
            };
            layers.push(NetLayer {
                id: id.clone(),
                op,
                rows: tensor.rows(),
                cols: tensor.cols(),
                weights: tensor.values.iter().map(|&v| v as f64).collect(),
                relu: true,
            });
            prev_id = Some(id.clone());
            prev_shape = out_shape;
        }
        if let Some(last) = layers.last_mut() {
            last.relu = false;
        }
        Ok(ChainNet {
            layers,
            input_shape: model.input_shape,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map(|l| l.rows).unwrap_or(0)
    }

    /// Converts the f64 training weights back to f32 storage tensors.
    pub fn to_weight_map(&self, model: &ModelGraph) -> WeightMap {
        let mut map = WeightMap::new();
        for layer in &self.layers {
            let shape = model
                .layer(&layer.id)
                .and_then(|l| l.weight_shape)
                .expect("net layers exist in the model");
            let values: Vec<f32> = layer.weights.iter().map(|&v| v as f32).collect();
            let dims = (shape.filters, shape.in_channels, shape.kernel_h, shape.kernel_w);
            map.insert(
                layer.id.clone(),
                WeightTensor::new(layer.id.clone(), dims, values).expect("dims match by construction"),
            );
        }
        map
    }

    /// Zeroes weights outside `keep` (flat row-major per layer) and returns
    /// nothing; callers re-apply after every optimizer step to keep the mask
    /// frozen.
    pub fn apply_masks(&mut self, keep: &BTreeMap<String, Vec<bool>>) {
        for layer in &mut self.layers {
            if let Some(flags) = keep.get(&layer.id) {
                for (w, &k) in layer.weights.iter_mut().zip(flags) {
                    if !k {
                        *w = 0.0;
                    }
                }
            }
        }
    }

    /// Forward pass to logits.
    pub fn logits(&self, image: &[f32]) -> Vec<f64> {
        let mut x: Vec<f64> = image.iter().map(|&v| v as f64).collect();
        for layer in &self.layers {
            x = layer.forward(&x).output;
            if layer.relu {
                for v in &mut x {
                    *v = v.max(0.0);
                }
            }
        }
        x
    }

    pub fn predict(&self, image: &[f32]) -> usize {
        let logits = self.logits(image);
        logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Mean softmax-cross-entropy over the batch. `grads[i]` accumulates the
    /// task gradient for layer i (flat row-major), scaled by 1/batch.
    pub fn batch_loss_and_grads(
        &self,
        images: &[&[f32]],
        labels: &[u8],
        grads: &mut [Vec<f64>],
    ) -> f64 {
        assert_eq!(images.len(), labels.len());
        assert_eq!(grads.len(), self.layers.len());
        let scale = 1.0 / images.len() as f64;
        let mut total = 0.0;
        for (image, &label) in images.iter().zip(labels) {
            total += self.sample_loss_and_grads(image, label, scale, grads);
        }
        total * scale
    }

    /// Loss only, for finite differencing.
    pub fn batch_loss(&self, images: &[&[f32]], labels: &[u8]) -> f64 {
        let mut total = 0.0;
        for (image, &label) in images.iter().zip(labels) {
            let logits = self.logits(image);
            total += cross_entropy(&logits, label);
        }
        total / images.len() as f64
    }

    fn sample_loss_and_grads(
        &self,
        image: &[f32],
        label: u8,
        scale: f64,
        grads: &mut [Vec<f64>],
    ) -> f64 {
        // Forward, caching each layer's input and post-activation output.
        let mut x: Vec<f64> = image.iter().map(|&v| v as f64).collect();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let cache = layer.forward(&x);
            let mut out = cache.output.clone();
            if layer.relu {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            caches.push((x, cache));
            x = out;
        }
        let logits = x;
        let loss = cross_entropy(&logits, label);

        // d(loss)/d(logits) = softmax - onehot.
        let probs = softmax(&logits);
        let mut dy: Vec<f64> = probs;
        dy[label as usize] -= 1.0;

        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let (input, cache) = &caches[idx];
            if layer.relu {
                for (d, &pre) in dy.iter_mut().zip(&cache.output) {
                    if pre <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            dy = layer.backward(input, cache, &dy, scale, &mut grads[idx]);
        }
        loss
    }
}

/// Per-sample forward cache of one layer.
pub struct LayerCache {
    /// Pre-activation output, row-major (rows x positions).
    output: Vec<f64>,
    /// im2col matrix for conv layers, (cols x positions) row-major.
    cols: Option<Vec<f64>>,
}

impl NetLayer {
    fn positions(&self) -> usize {
        match &self.op {
            NetOp::Conv { out_shape, .. } => out_shape.1 * out_shape.2,
            NetOp::Fc => 1,
        }
    }

    fn forward(&self, input: &[f64]) -> LayerCache {
        match &self.op {
            NetOp::Conv { in_shape, out_shape, kernel, stride, padding } => {
                let cols = im2col(input, *in_shape, *kernel, *stride, *padding, *out_shape);
                let positions = out_shape.1 * out_shape.2;
                let output = matmul(&self.weights, &cols, self.rows, self.cols, positions);
                LayerCache { output, cols: Some(cols) }
            }
            NetOp::Fc => {
                debug_assert_eq!(input.len(), self.cols);
                let output = matmul(&self.weights, input, self.rows, self.cols, 1);
                LayerCache { output, cols: None }
            }
        }
    }

    /// Accumulates `scale * dW` into `grad` and returns the gradient w.r.t.
    /// the layer input.
    fn backward(
        &self,
        input: &[f64],
        cache: &LayerCache,
        dy: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> Vec<f64> {
        let positions = self.positions();
        match &self.op {
            NetOp::Conv { in_shape, out_shape, kernel, stride, padding } => {
                let cols = cache.cols.as_ref().expect("conv caches its im2col");
                // dW += dY * cols^T
                for m in 0..self.rows {
                    for ck in 0..self.cols {
                        let mut acc = 0.0;
                        for p in 0..positions {
                            acc += dy[m * positions + p] * cols[ck * positions + p];
                        }
                        grad[m * self.cols + ck] += scale * acc;
                    }
                }
                // dcols = W^T * dY
                let mut dcols = vec![0.0f64; self.cols * positions];
                for m in 0..self.rows {
                    for ck in 0..self.cols {
                        let w = self.weights[m * self.cols + ck];
                        if w != 0.0 {
                            for p in 0..positions {
                                dcols[ck * positions + p] += w * dy[m * positions + p];
                            }
                        }
                    }
                }
                col2im(&dcols, *in_shape, *kernel, *stride, *padding, *out_shape)
            }
            NetOp::Fc => {
                for m in 0..self.rows {
                    let d = dy[m];
                    for ck in 0..self.cols {
                        grad[m * self.cols + ck] += scale * d * input[ck];
                    }
                }
                let mut dx = vec![0.0f64; self.cols];
                for m in 0..self.rows {
                    let d = dy[m];
                    for ck in 0..self.cols {
                        dx[ck] += self.weights[m * self.cols + ck] * d;
                    }
                }
                dx
            }
        }
    }
}

fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; m * n];
    for i in 0..m {
        for kk in 0..k {
            let av = a[i * k + kk];
            if av != 0.0 {
                for j in 0..n {
                    out[i * n + j] += av * b[kk * n + j];
                }
            }
        }
    }
    out
}

/// Unfolds `(C, H, W)` into a `(C*Kh*Kw) x (Ho*Wo)` matrix; out-of-bounds
/// taps read as zero (zero padding).
fn im2col(
    input: &[f64],
    in_shape: (usize, usize, usize),
    kernel: (usize, usize),
    stride: usize,
    padding: usize,
    out_shape: (usize, usize, usize),
) -> Vec<f64> {
    let (c_in, h, w) = in_shape;
    let (kh, kw) = kernel;
    let (_, ho, wo) = out_shape;
    let positions = ho * wo;
    let mut cols = vec![0.0f64; c_in * kh * kw * positions];
    for c in 0..c_in {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                for oh in 0..ho {
                    let ih = (oh * stride + ki) as isize - padding as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for ow in 0..wo {
                        let iw = (ow * stride + kj) as isize - padding as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        cols[row * positions + oh * wo + ow] =
                            input[(c * h + ih as usize) * w + iw as usize];
                    }
                }
            }
        }
    }
    cols
}

/// Transpose of im2col: scatter-adds column gradients back onto the input.
fn col2im(
    dcols: &[f64],
    in_shape: (usize, usize, usize),
    kernel: (usize, usize),
    stride: usize,
    padding: usize,
    out_shape: (usize, usize, usize),
) -> Vec<f64> {
    let (c_in, h, w) = in_shape;
    let (kh, kw) = kernel;
    let (_, ho, wo) = out_shape;
    let positions = ho * wo;
    let mut dinput = vec![0.0f64; c_in * h * w];
    for c in 0..c_in {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                for oh in 0..ho {
                    let ih = (oh * stride + ki) as isize - padding as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for ow in 0..wo {
                        let iw = (ow * stride + kj) as isize - padding as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        dinput[(c * h + ih as usize) * w + iw as usize] +=
                            dcols[row * positions + oh * wo + ow];
                    }
                }
            }
        }
    }
    dinput
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn cross_entropy(logits: &[f64], label: u8) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    log_sum - logits[label as usize]
}
