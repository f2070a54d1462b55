use thiserror::Error;

#[derive(Debug, Error)]
pub enum PruneError {
    /// The training facility only handles single-input chains of conv/fc
    /// layers; anything else is rejected up front.
    #[error("layer `{layer}` unsupported by the training facility: {reason}")]
    UnsupportedModel { layer: String, reason: String },

    #[error("no weights supplied for layer `{layer}`")]
    MissingWeights { layer: String },

    #[error("layer `{layer}`: {message}")]
    ShapeMismatch { layer: String, message: String },

    /// The requested compression cannot be met, e.g. a rate that would keep
    /// less than one column per block row-band in some layer.
    #[error("infeasible compression target: {message}")]
    InfeasibleTarget { message: String },

    #[error("non-finite loss at round {round}, epoch {epoch}: training diverged (reduce the learning rate or lambda)")]
    NonFiniteLoss { round: usize, epoch: usize },

    #[error("bad magic; expected `{expected}`")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("file ends mid-record")]
    Truncated,

    #[error("malformed mask data: {0}")]
    MaskFormat(String),

    #[error("malformed dataset: {0}")]
    DataFormat(String),

    #[error(transparent)]
    Graph(#[from] model_graph::GraphError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
