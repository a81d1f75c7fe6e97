use thiserror::Error;

/// Errors produced by landscape evaluation, sampling and mapping.
#[derive(Debug, Error)]
pub enum ElmError {
    /// A state or argument that does not match the model it is used with.
    #[error("rejected input: {0}")]
    InvalidInput(String),

    /// Non-finite arithmetic inside a network forward or backward pass.
    #[error("non-finite value in layer {layer}: {detail}")]
    Numeric { layer: usize, detail: String },

    /// The operation exists but is not available for this model or kernel.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Malformed network weight file.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Generator output does not feed the descriptor input.
    #[error("cannot compose networks: generator output dim {generator_out} != descriptor input dim {descriptor_in}")]
    Composition {
        generator_out: usize,
        descriptor_in: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    /// Chain-of-states refinement blew up.
    #[error("path refinement diverged: {0}")]
    Divergence(String),

    /// Mapping produced a basin count that indicates badly chosen (T, alpha).
    #[error("tuning failure: {0}")]
    TuningFailure(String),

    /// A Wang-Landau probe never saw an energy inside the configured spectrum.
    #[error("energy spectrum excludes all reachable energies: {0}")]
    Spectrum(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ElmError> = std::result::Result<T, E>;

impl ElmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ElmError::InvalidInput(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        ElmError::Unsupported(msg.into())
    }
}
