use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty table")]
    EmptyTable,
    #[error("ragged rows: row {row} has {found} cells, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("override names missing column `{0}`")]
    UnknownOverride(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("more than one target column ({0} and {1})")]
    MultipleTargets(String, String),
    #[error("column `{0}` has an empty or duplicated category list")]
    BadCategories(String),
    #[error("constant column: fewer than 2 distinct values")]
    ConstantColumn,
    #[error("max_modes must be at least 1")]
    NoModes,
    #[error("unknown category `{value}` in column `{column}`")]
    UnknownCategory { column: String, value: String },
    #[error("cannot parse `{value}` as a number in column `{column}`")]
    Unparsable { column: String, value: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("noise dimension must be even, got {0}")]
    OddNoiseDim(usize),
    #[error("batch too small: need at least {need} rows, got {got}")]
    BatchTooSmall { need: usize, got: usize },
    #[error("known-component count {k} out of range 1..={max}")]
    KnownOutOfRange { k: usize, max: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model has not been trained")]
    Untrained,
    #[error("requested zero rows")]
    ZeroRows,
    #[error(
        "non-finite {loss} loss at epoch {epoch}, iteration {iter}; parameter norms {param_norms:?}; batch rows {batch_rows:?}"
    )]
    NonFinite {
        loss: &'static str,
        epoch: usize,
        iter: usize,
        param_norms: Vec<(String, f64)>,
        batch_rows: Vec<usize>,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("schema file: {0}")]
    SchemaFile(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
