use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("environment: {0}")]
    Environment(String),

    #[error("trajectory needs at least two distinct waypoints")]
    DegeneratePath,

    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("tag position coincides with anchor {anchor_id}; true distance must be positive")]
    CoincidentAnchor { anchor_id: u32 },

    #[error("samples are not sorted by timestamp (index {index})")]
    UnsortedSamples { index: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("input is constant; rank correlation is undefined")]
    ConstantInput,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training data must contain both LOS and NLOS labels")]
    SingleClass,

    #[error("feature dimension {got} does not match model input dimension {expected}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("position fix needs at least 3 anchors, got {got}")]
    UnderDetermined { got: usize },

    #[error("search grid is empty")]
    EmptyGrid,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("no estimate/ground-truth pairs align within {tolerance} s")]
    NoAlignablePairs { tolerance: f64 },

    #[error("improvement baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),

    #[error("config {path}: {message}")]
    Config { path: String, message: String },

    #[error("{path}:{line}: {message}")]
    Csv {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(
        "dataset has no labels; simulate one with the `simulate` command or add a label column"
    )]
    UnlabeledDataset,

    #[error("dataset references anchor ids missing from the environment: {ids:?}")]
    UnknownAnchors { ids: Vec<u32> },

    #[error("pipeline stage `{stage}` failed: {source}")]
    Pipeline {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
