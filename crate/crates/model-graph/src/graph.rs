use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::GraphError;
use crate::layer::{BranchStructure, LayerKind, LayerSpec};
use crate::Result;

/// Per-layer inferred output shapes, `(channels, height, width)`.
pub type ShapeMap = BTreeMap<String, (usize, usize, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub layers: Vec<LayerSpec>,
    pub branch_structures: Vec<BranchStructure>,
    /// Model input shape, `(channels, height, width)`.
    pub input_shape: (usize, usize, usize),
}

impl ModelGraph {
    pub fn new(
        layers: Vec<LayerSpec>,
        branch_structures: Vec<BranchStructure>,
        input_shape: (usize, usize, usize),
    ) -> Result<Self> {
        let graph = ModelGraph {
            layers,
            branch_structures,
            input_shape,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn layer(&self, id: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.id == id)
    }

    pub fn weight_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| l.kind.has_weights())
    }

    /// Checks every structural invariant: unique resolvable ids, acyclicity,
    /// weight shapes present exactly on weight layers, input arity per kind,
    /// and branch structures referencing disjoint existing layers.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for layer in &self.layers {
            if !ids.insert(layer.id.as_str()) {
                return Err(GraphError::DuplicateLayerId(layer.id.clone()));
            }
        }
        for layer in &self.layers {
            for input in &layer.inputs {
                if !ids.contains(input.as_str()) {
                    return Err(GraphError::UnknownInput {
                        layer: layer.id.clone(),
                        input: input.clone(),
                    });
                }
            }
            self.validate_layer(layer)?;
        }
        self.topo_order()?;
        self.validate_structures()?;
        Ok(())
    }

    fn validate_layer(&self, layer: &LayerSpec) -> Result<()> {
        let invalid = |message: &str| {
            Err(GraphError::InvalidLayer {
                layer: layer.id.clone(),
                message: message.to_string(),
            })
        };
        match (layer.kind.has_weights(), &layer.weight_shape) {
            (true, None) => return invalid("conv/fc layer requires a weight shape"),
            (false, Some(_)) => return invalid("non-weight layer must not carry a weight shape"),
            (true, Some(shape)) => {
                if shape.filters == 0
                    || shape.in_channels == 0
                    || shape.kernel_h == 0
                    || shape.kernel_w == 0
                {
                    return invalid("weight dimensions must be positive");
                }
                if layer.kind == LayerKind::Fc && (shape.kernel_h, shape.kernel_w) != (1, 1) {
                    return invalid("fc layers use a 1x1 kernel");
                }
            }
            (false, None) => {}
        }
        let arity_ok = match layer.kind {
            LayerKind::Conv | LayerKind::Fc => layer.inputs.len() <= 1,
            LayerKind::PointwiseAdd | LayerKind::PointwiseMul => layer.inputs.len() == 2,
            LayerKind::Concat => !layer.inputs.is_empty(),
            LayerKind::Upsample | LayerKind::TransposeReshape => layer.inputs.len() == 1,
        };
        if !arity_ok {
            return invalid("wrong number of inputs for this layer kind");
        }
        if layer.kind == LayerKind::Upsample && layer.stride == 0 {
            return invalid("upsample scale must be positive");
        }
        if layer.kind == LayerKind::Conv && layer.stride == 0 {
            return invalid("conv stride must be positive");
        }
        Ok(())
    }

    fn validate_structures(&self) -> Result<()> {
        let ids: HashSet<&str> = self.layers.iter().map(|l| l.id.as_str()).collect();
        let mut claimed: HashSet<&str> = HashSet::new();
        for (index, structure) in self.branch_structures.iter().enumerate() {
            if structure.branches.is_empty() {
                return Err(GraphError::BranchStructure {
                    index,
                    message: "structure has no branches".into(),
                });
            }
            for branch in &structure.branches {
                for id in branch {
                    if !ids.contains(id.as_str()) {
                        return Err(GraphError::BranchStructure {
                            index,
                            message: format!("unknown layer `{id}`"),
                        });
                    }
                    if !claimed.insert(id.as_str()) {
                        return Err(GraphError::BranchStructure {
                            index,
                            message: format!("layer `{id}` claimed by more than one branch"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Kahn's algorithm over the input edges. Errors on any cycle.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let index_of: HashMap<&str, usize> = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id.as_str(), i))
            .collect();
        let mut indegree = vec![0usize; self.layers.len()];
        let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate() {
            for input in &layer.inputs {
                let j = index_of[input.as_str()];
                indegree[i] += 1;
                consumers[j].push(i);
            }
        }
        let mut ready: Vec<usize> = (0..self.layers.len()).filter(|&i| indegree[i] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(self.layers.len());
        while let Some(i) = ready.pop() {
            order.push(i);
            for &c in &consumers[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(c);
                }
            }
        }
        if order.len() != self.layers.len() {
            return Err(GraphError::CycleDetected);
        }
        Ok(order)
    }

    /// Propagates `(channels, height, width)` through the graph.
    pub fn infer_shapes(&self) -> Result<ShapeMap> {
        let mut shapes: ShapeMap = BTreeMap::new();
        let order = self.topo_order()?;
        for i in order {
            let layer = &self.layers[i];
            let fail = |message: String| GraphError::ShapeInference {
                layer: layer.id.clone(),
                message,
            };
            let input_shapes: Vec<(usize, usize, usize)> = if layer.inputs.is_empty() {
                vec![self.input_shape]
            } else {
                layer
                    .inputs
                    .iter()
                    .map(|id| shapes[id.as_str()])
                    .collect()
            };
            let out = match layer.kind {
                LayerKind::Conv => {
                    let (c, h, w) = input_shapes[0];
                    let shape = layer.weight_shape.as_ref().unwrap();
                    if shape.in_channels != c {
                        return Err(fail(format!(
                            "expects {} input channels, got {c}",
                            shape.in_channels
                        )));
                    }
                    let h_pad = h + 2 * layer.padding;
                    let w_pad = w + 2 * layer.padding;
                    if h_pad < shape.kernel_h || w_pad < shape.kernel_w {
                        return Err(fail(format!(
                            "kernel {}x{} larger than padded input {h_pad}x{w_pad}",
                            shape.kernel_h, shape.kernel_w
                        )));
                    }
                    let h_out = (h_pad - shape.kernel_h) / layer.stride + 1;
                    let w_out = (w_pad - shape.kernel_w) / layer.stride + 1;
                    (shape.filters, h_out, w_out)
                }
                LayerKind::Fc => {
                    let (c, h, w) = input_shapes[0];
                    let shape = layer.weight_shape.as_ref().unwrap();
                    if shape.in_channels != c * h * w {
                        return Err(fail(format!(
                            "expects {} input features, got {}x{}x{} = {}",
                            shape.in_channels,
                            c,
                            h,
                            w,
                            c * h * w
                        )));
                    }
                    (shape.filters, 1, 1)
                }
                LayerKind::PointwiseAdd | LayerKind::PointwiseMul => {
                    if input_shapes[0] != input_shapes[1] {
                        return Err(fail(format!(
                            "operand shapes differ: {:?} vs {:?}",
                            input_shapes[0], input_shapes[1]
                        )));
                    }
                    input_shapes[0]
                }
                LayerKind::Concat => {
                    let (_, h, w) = input_shapes[0];
                    if input_shapes.iter().any(|&(_, ih, iw)| (ih, iw) != (h, w)) {
                        return Err(fail("concat inputs have mismatched spatial dims".into()));
                    }
                    let channels = input_shapes.iter().map(|&(c, _, _)| c).sum();
                    (channels, h, w)
                }
                LayerKind::Upsample => {
                    let (c, h, w) = input_shapes[0];
                    (c, h * layer.stride, w * layer.stride)
                }
                LayerKind::TransposeReshape => input_shapes[0],
            };
            shapes.insert(layer.id.clone(), out);
        }
        Ok(shapes)
    }
}
