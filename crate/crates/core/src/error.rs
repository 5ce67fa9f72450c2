use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the toolkit can report.
///
/// Variants are grouped so the CLI can map them onto exit codes:
/// numerical failures ([`Error::is_numerical`]) exit with 3, everything
/// else is treated as a usage or validation problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed tensor file {path}: {reason}")]
    TensorFormat { path: PathBuf, reason: String },

    #[error("missing tensor file {0}")]
    MissingTensorFile(PathBuf),

    #[error("unknown layer kind `{kind}` for layer `{layer}`")]
    UnknownLayerKind { layer: String, kind: String },

    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("layer `{at}` is not upstream of target layer `{target}`")]
    NotUpstream { at: String, target: String },

    #[error("index {index} out of range for {context} (size {size})")]
    IndexOutOfRange {
        context: String,
        index: usize,
        size: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate denominator at unit {unit} of layer `{layer}` (|z| < 1e-12 with epsilon = 0)")]
    DegenerateDenominator { layer: String, unit: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("sample `{0}` not found in dataset")]
    MissingSample(String),

    #[error("attribution failed for sample `{sample}`: {source}")]
    SampleFailed {
        sample: String,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("degenerate heatmap: {0}")]
    DegenerateHeatmap(String),

    #[error("k-means: {0}")]
    KMeans(String),

    #[error("infeasible construction: {0}")]
    Infeasible(String),

    #[error("image export failed: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the arithmetic itself rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite(_) | Error::DegenerateDenominator { .. } | Error::KMeans(_) => true,
            Error::SampleFailed { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
