//! DNN models as a DAG of layers, with weight/FLOP accounting and
//! serialization of model structure and weights.
//!
//! A [`ModelGraph`] is an ordered list of [`LayerSpec`]s plus the branch
//! structures the scheduler cares about. Weight layers (`conv`, `fc`) carry a
//! 4-D shape that flattens to a 2-D GEMM view (filters x channel*kernel
//! positions); everything else only participates in shape inference.
//!
//! All types are immutable after construction and safe to share across
//! threads. Counting operations are pure.

mod count;
mod error;
mod graph;
mod layer;
mod tensor;
mod text;
mod weights_io;

pub mod fixtures;

pub use count::{count_flops, count_weights, FlopCount, LayerFlops, LayerWeights, WeightCount};
pub use error::GraphError;
pub use graph::{ModelGraph, ShapeMap};
pub use layer::{BranchKind, BranchStructure, LayerKind, LayerSpec, WeightShape};
pub use tensor::WeightTensor;
pub use text::{load_model, parse_model, render_model, save_model};
pub use weights_io::{load_weights, read_weights, save_weights, write_weights, WeightMap};

pub type Result<T> = std::result::Result<T, GraphError>;
