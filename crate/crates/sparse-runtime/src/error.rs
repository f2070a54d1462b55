use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("layer `{layer}`: weights are {wr}x{wc} but the mask covers {mr}x{mc}")]
    MaskShape {
        layer: String,
        wr: usize,
        wc: usize,
        mr: usize,
        mc: usize,
    },

    #[error("packed layer `{layer}` is corrupt: {message}")]
    CorruptLayer { layer: String, message: String },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("not a packed-layer file (bad magic)")]
    BadMagic,

    #[error("unsupported packed-layer version {0}")]
    UnsupportedVersion(u8),

    #[error("packed-layer file is truncated ({0})")]
    Truncated(String),

    #[error("packed-layer file has trailing bytes")]
    TrailingBytes,

    #[error("model run: layer `{layer}` input `{input}` has not been computed")]
    MissingInput { layer: String, input: String },

    #[error("model run: no packed weights for layer `{0}`")]
    UnpackedLayer(String),

    #[error("model run: {0}")]
    Run(String),

    #[error(transparent)]
    Mask(#[from] pruner::PruneError),

    #[error(transparent)]
    Graph(#[from] model_graph::GraphError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
