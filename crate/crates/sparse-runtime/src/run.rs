//! End-to-end execution of a model from its packed layers.
//!
//! Layers run in topological order. When a branch structure's members have
//! all been reached, the whole structure executes at once: each branch is
//! assigned a lane, the two lanes run as concurrent threads, and branches on
//! the same lane run sequentially — the cost model the scheduler optimizes
//! is exactly what happens here. Everything outside branch structures runs
//! on the fast lane.
//!
//! Activation convention: conv/fc layers whose output feeds another layer
//! apply ReLU; terminal (sink) weight layers stay linear, producing raw
//! logits or head outputs. This mirrors the training-side network, so a
//! packed model classifies like the net it was pruned from.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use model_graph::{LayerKind, LayerSpec, ModelGraph};

use crate::conv::sparse_conv;
use crate::error::SparseError;
use crate::format::PackedModel;
use crate::gemm::{sparse_gemm, TuningConfig};

/// Execution lane: fast-parallel ("G") or general-purpose ("C").
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    Fast,
    General,
}

impl Lane {
    pub fn as_str(self) -> &'static str {
        match self {
            Lane::Fast => "G",
            Lane::General => "C",
        }
    }
}

/// Per-structure, per-branch lane assignments, aligned index-for-index with
/// `model.branch_structures`. The scheduler produces one of these.
pub type BranchAssignments = Vec<Vec<Lane>>;

/// An activation tensor, `(channels, height, width)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub shape: (usize, usize, usize),
    pub values: Vec<f32>,
}

/// One timed unit of execution: a sequential layer, or one branch of a
/// structure on its lane.
#[derive(Debug, Clone)]
pub struct TraceEvent {
    pub label: String,
    /// `(structure index, branch index)` for branch events.
    pub branch: Option<(usize, usize)>,
    pub lane: Lane,
    pub duration: Duration,
}

#[derive(Debug)]
pub struct RunResult {
    /// Every layer's output, keyed by layer id.
    pub outputs: BTreeMap<String, Feature>,
    pub trace: Vec<TraceEvent>,
    /// Wall time of the whole run.
    pub wall: Duration,
}

/// Runs the model on `input` (the graph's input shape, row-major). Branches
/// follow `assignments` when given, otherwise everything uses the fast lane.
pub fn run_model(
    model: &ModelGraph,
    packed: &PackedModel,
    input: &[f32],
    assignments: Option<&BranchAssignments>,
) -> Result<RunResult, SparseError> {
    let started = Instant::now();
    let (ci, hi, wi) = model.input_shape;
    if input.len() != ci * hi * wi {
        return Err(SparseError::DimMismatch(format!(
            "model input is {ci}x{hi}x{wi}, got {} values",
            input.len()
        )));
    }
    if let Some(a) = assignments {
        if a.len() != model.branch_structures.len()
            || a.iter()
                .zip(&model.branch_structures)
                .any(|(lanes, s)| lanes.len() != s.branches.len())
        {
            return Err(SparseError::Run(
                "lane assignments do not match the model's branch structures".into(),
            ));
        }
    }
    for layer in model.weight_layers() {
        if !packed.contains_key(&layer.id) {
            return Err(SparseError::UnpackedLayer(layer.id.clone()));
        }
    }

    // Which structure/branch each layer belongs to, and who consumes whom —
    // sinks stay linear, interior weight layers get ReLU.
    let mut membership: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (s, structure) in model.branch_structures.iter().enumerate() {
        for (b, branch) in structure.branches.iter().enumerate() {
            for id in branch {
                membership.insert(id.as_str(), (s, b));
            }
        }
    }
    let mut has_consumer: BTreeMap<&str, bool> = BTreeMap::new();
    for layer in &model.layers {
        for input_id in &layer.inputs {
            has_consumer.insert(input_id.as_str(), true);
        }
    }

    let input_feature = Feature {
        shape: model.input_shape,
        values: input.to_vec(),
    };
    let mut outputs: BTreeMap<String, Feature> = BTreeMap::new();
    let mut trace = Vec::new();

    let mut remaining: Vec<usize> = model
        .branch_structures
        .iter()
        .map(|s| s.branches.iter().map(|b| b.len()).sum())
        .collect();

    for idx in model.topo_order()? {
        let layer = &model.layers[idx];
        match membership.get(layer.id.as_str()) {
            None => {
                let start = Instant::now();
                let feature = execute_layer_with(
                    layer,
                    packed,
                    &|id| outputs.get(id),
                    &input_feature,
                    &has_consumer,
                    &TuningConfig::default(),
                )?;
                trace.push(TraceEvent {
                    label: layer.id.clone(),
                    branch: None,
                    lane: Lane::Fast,
                    duration: start.elapsed(),
                });
                outputs.insert(layer.id.clone(), feature);
            }
            Some(&(s, _)) => {
                remaining[s] -= 1;
                if remaining[s] == 0 {
                    run_structure(
                        model,
                        s,
                        packed,
                        &mut outputs,
                        &input_feature,
                        &has_consumer,
                        assignments,
                        &mut trace,
                    )?;
                }
            }
        }
    }

    Ok(RunResult {
        outputs,
        trace,
        wall: started.elapsed(),
    })
}

/// Executes structure `s`: branches partitioned onto two lanes, lanes run
/// as concurrent threads, branches sequential within a lane.
#[allow(clippy::too_many_arguments)]
fn run_structure(
    model: &ModelGraph,
    s: usize,
    packed: &PackedModel,
    outputs: &mut BTreeMap<String, Feature>,
    input_feature: &Feature,
    has_consumer: &BTreeMap<&str, bool>,
    assignments: Option<&BranchAssignments>,
    trace: &mut Vec<TraceEvent>,
) -> Result<(), SparseError> {
    let structure = &model.branch_structures[s];
    let lanes: Vec<Lane> = match assignments {
        Some(a) => a[s].clone(),
        None => vec![Lane::Fast; structure.branches.len()],
    };

    type BranchOut = Vec<(usize, Vec<(String, Feature)>, Duration)>;
    let run_lane = |lane: Lane| -> Result<BranchOut, SparseError> {
        let tuning = match lane {
            Lane::Fast => TuningConfig::default(),
            Lane::General => TuningConfig::serial(),
        };
        let mut done = Vec::new();
        for (b, branch) in structure.branches.iter().enumerate() {
            if lanes[b] != lane {
                continue;
            }
            let start = Instant::now();
            // Branches are independent: reads hit pre-fork outputs or this
            // branch's own locals.
            let mut locals: Vec<(String, Feature)> = Vec::new();
            for id in branch {
                let layer = model
                    .layer(id)
                    .ok_or_else(|| SparseError::Run(format!("unknown branch layer `{id}`")))?;
                let feature = execute_layer_with(
                    layer,
                    packed,
                    &|needed| {
                        locals
                            .iter()
                            .find(|(lid, _)| lid == needed)
                            .map(|(_, f)| f)
                            .or_else(|| outputs.get(needed))
                    },
                    input_feature,
                    has_consumer,
                    &tuning,
                )?;
                locals.push((id.clone(), feature));
            }
            done.push((b, locals, start.elapsed()));
        }
        Ok(done)
    };

    let (fast, general) = std::thread::scope(|scope| {
        let general = scope.spawn(|| run_lane(Lane::General));
        let fast = run_lane(Lane::Fast);
        (fast, general.join().expect("lane thread panicked"))
    });

    let mut events: Vec<(usize, TraceEvent)> = Vec::new();
    for (lane, result) in [(Lane::Fast, fast?), (Lane::General, general?)] {
        for (b, features, duration) in result {
            events.push((
                b,
                TraceEvent {
                    label: format!("structure {s} branch {b}"),
                    branch: Some((s, b)),
                    lane,
                    duration,
                },
            ));
            for (id, feature) in features {
                outputs.insert(id, feature);
            }
        }
    }
    events.sort_by_key(|(b, _)| *b);
    trace.extend(events.into_iter().map(|(_, e)| e));
    Ok(())
}

/// `'f` is the lifetime of the features `lookup` resolves to; it is named so
/// the returned references are not tied to the id string passed in.
fn execute_layer_with<'f>(
    layer: &LayerSpec,
    packed: &PackedModel,
    lookup: &dyn Fn(&str) -> Option<&'f Feature>,
    input_feature: &'f Feature,
    has_consumer: &BTreeMap<&str, bool>,
    tuning: &TuningConfig,
) -> Result<Feature, SparseError> {
    let mut ins: Vec<&Feature> = Vec::with_capacity(layer.inputs.len().max(1));
    if layer.inputs.is_empty() {
        ins.push(input_feature);
    } else {
        for id in &layer.inputs {
            ins.push(lookup(id).ok_or_else(|| SparseError::MissingInput {
                layer: layer.id.clone(),
                input: id.clone(),
            })?);
        }
    }

    let apply_relu =
        layer.kind.has_weights() && has_consumer.get(layer.id.as_str()).copied().unwrap_or(false);

    let mut feature = match layer.kind {
        LayerKind::Conv => {
            let p = &packed[&layer.id];
            let (values, shape) =
                sparse_conv(p, &ins[0].values, ins[0].shape, layer.stride, layer.padding, tuning)?;
            Feature { shape, values }
        }
        LayerKind::Fc => {
            let p = &packed[&layer.id];
            let (c, h, w) = ins[0].shape;
            if c * h * w != p.cols() {
                return Err(SparseError::DimMismatch(format!(
                    "layer `{}` expects {} input features, got {c}x{h}x{w}",
                    layer.id,
                    p.cols()
                )));
            }
            let values = sparse_gemm(p, &ins[0].values, 1, tuning)?;
            Feature {
                shape: (p.rows(), 1, 1),
                values,
            }
        }
        LayerKind::PointwiseAdd | LayerKind::PointwiseMul => {
            let (a, b) = (ins[0], ins[1]);
            if a.shape != b.shape {
                return Err(SparseError::DimMismatch(format!(
                    "layer `{}` operands differ: {:?} vs {:?}",
                    layer.id, a.shape, b.shape
                )));
            }
            let values = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(&x, &y)| {
                    if layer.kind == LayerKind::PointwiseAdd {
                        x + y
                    } else {
                        x * y
                    }
                })
                .collect();
            Feature {
                shape: a.shape,
                values,
            }
        }
        LayerKind::Concat => {
            let (_, h, w) = ins[0].shape;
            if ins.iter().any(|f| (f.shape.1, f.shape.2) != (h, w)) {
                return Err(SparseError::DimMismatch(format!(
                    "layer `{}` concat inputs have mismatched spatial dims",
                    layer.id
                )));
            }
            let channels = ins.iter().map(|f| f.shape.0).sum();
            let mut values = Vec::with_capacity(channels * h * w);
            for f in &ins {
                values.extend_from_slice(&f.values);
            }
            Feature {
                shape: (channels, h, w),
                values,
            }
        }
        LayerKind::Upsample => {
            let (c, h, w) = ins[0].shape;
            let s = layer.stride;
            let mut values = vec![0f32; c * h * s * w * s];
            for ch in 0..c {
                for y in 0..h * s {
                    for x in 0..w * s {
                        values[(ch * h * s + y) * w * s + x] =
                            ins[0].values[(ch * h + y / s) * w + x / s];
                    }
                }
            }
            Feature {
                shape: (c, h * s, w * s),
                values,
            }
        }
        // Shape-preserving head plumbing; the layout change it stands for
        // has no numeric effect at this scale.
        LayerKind::TransposeReshape => ins[0].clone(),
    };

    if apply_relu {
        for v in &mut feature.values {
            *v = v.max(0.0);
        }
    }
    Ok(feature)
}
