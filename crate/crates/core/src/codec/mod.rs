//! Column typing and the bidirectional row encoding.
//!
//! Categorical cells become one-hot segments. Numeric cells are (optionally)
//! log transformed, assigned to a mode of a variational Gaussian mixture and
//! emitted as a one-hot mode indicator followed by the value's offset within
//! that mode, scaled by four standard deviations.

mod layout;
mod numeric;
mod schema;
mod table;
mod vgm;

pub use layout::{ColumnLayout, Component, ComponentKind, ComponentLayout};
pub use numeric::{fit_numeric_transformer, Mode, NumericTransformer, LOG_SKEW_THRESHOLD};
pub use schema::{
    infer_schema, parse_number, read_csv, write_csv, ColumnKind, ColumnMeta, ColumnOverride, RawTable,
    SchemaOverrides, TableSchema, DEFAULT_CATEGORY_THRESHOLD,
};
pub use table::{CodecConfig, EncodedTable, MissingPolicy, TableCodec, MISSING_SENTINEL};
pub use vgm::{fit_vgm, VgmOptions};
pub(crate) use table::argmax as argmax_slice;
