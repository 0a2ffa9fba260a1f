use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("no target column")]
    MissingTarget,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("target class {0:?} is absent from the training data")]
    ClassMissing(String),
    #[error("{what}: need at least {need} rows, got {got}")]
    TooSmall { what: &'static str, need: usize, got: usize },
    #[error("size mismatch: expected {expected} rows, got {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("column {0:?} has fewer than two distinct values on the real data")]
    SingleBin(String),
    #[error("column {column:?}: cannot parse {value:?} as a number")]
    Parse { column: String, value: String },
    #[error(transparent)]
    Core(#[from] taegan::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;
