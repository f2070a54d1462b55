use thiserror::Error;

#[derive(Error, Debug)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown layer kind `{kind}`")]
    UnknownLayerKind { line: usize, kind: String },
    #[error("cycle detected in layer graph")]
    CycleDetected,
    #[error("layer `{layer}`: unknown input `{input}`")]
    UnknownInput { layer: String, input: String },
    #[error("duplicate layer id `{0}`")]
    DuplicateLayerId(String),
    #[error("layer `{layer}`: {message}")]
    InvalidLayer { layer: String, message: String },
    #[error("shape inference failed at layer `{layer}`: {message}")]
    ShapeInference { layer: String, message: String },
    #[error("branch structure {index}: {message}")]
    BranchStructure { index: usize, message: String },
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated or trailing data")]
    Truncated,
    #[error("weights for layer `{layer}`: {message}")]
    WeightMismatch { layer: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
