use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("manifest lists no bands")]
    EmptyBandList,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate vignette polynomial (C = {0})")]
    DegenerateVignette(f64),
    #[error("radiance denominator vanishes at column {0}")]
    ZeroDenominator(usize),
    #[error("average panel radiance is not positive ({0})")]
    NonPositivePanelRadiance(f64),
    #[error("raster has no band named {0:?}")]
    MissingBand(String),
    #[error("tiling dimensions must be positive")]
    ZeroDimension,
    #[error("grid cell ({0}, {1}) provided twice")]
    DuplicateGridCell(usize, usize),
    #[error("grid cell ({0}, {1}) outside the tiling plan")]
    OutOfRangeIndex(usize, usize),
    #[error("classifier failure: {0}")]
    ClassifierFailure(String),
    #[error("no crop rows found")]
    NoRowsFound,
    #[error("malformed prediction {path}: {reason}")]
    MalformedPrediction { path: PathBuf, reason: String },
    #[error("prediction for grid cell ({row}, {col}) does not fit a {rows}x{cols} plan")]
    GridMismatch {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("every class has zero frequency")]
    AllClassesAbsent,
    #[error("input must be positive: {0}")]
    NonPositiveInput(&'static str),
    #[error("ground truth has no positive pixels")]
    NoPositives,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("invalid field config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable identifier of the error variant, used in machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "MissingFile",
            Error::SchemaViolation(_) => "SchemaViolation",
            Error::EmptyBandList => "EmptyBandList",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::Decode { .. } => "DecodeError",
            Error::InvariantViolation(_) => "InvariantViolation",
            Error::InvalidParams(_) => "InvalidParams",
            Error::DegenerateVignette(_) => "DegenerateVignette",
            Error::ZeroDenominator(_) => "ZeroDenominator",
            Error::NonPositivePanelRadiance(_) => "NonPositivePanelRadiance",
            Error::MissingBand(_) => "MissingBand",
            Error::ZeroDimension => "ZeroDimension",
            Error::DuplicateGridCell(..) => "DuplicateGridCell",
            Error::OutOfRangeIndex(..) => "OutOfRangeIndex",
            Error::ClassifierFailure(_) => "ClassifierFailure",
            Error::NoRowsFound => "NoRowsFound",
            Error::MalformedPrediction { .. } => "MalformedPrediction",
            Error::GridMismatch { .. } => "GridMismatch",
            Error::EmptyDataset => "EmptyDataset",
            Error::AllClassesAbsent => "AllClassesAbsent",
            Error::NonPositiveInput(_) => "NonPositiveInput",
            Error::NoPositives => "NoPositives",
            Error::EmptyMatrix => "EmptyMatrix",
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::Io(_) => "IoError",
        }
    }
}
