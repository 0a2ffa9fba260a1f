use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layout::ComponentLayout;
use super::numeric::{fit_numeric_transformer, NumericTransformer};
use super::schema::{parse_number, ColumnKind, RawTable, TableSchema, DEFAULT_CATEGORY_THRESHOLD};
use crate::autograd::Matrix;
use crate::error::{Error, Result};

/// Value substituted for unparsable numeric cells under [`MissingPolicy::Sentinel`].
pub const MISSING_SENTINEL: f64 = -9999.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    #[default]
    Error,
    Sentinel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub max_modes: usize,
    pub prune_weight: f64,
    pub category_threshold: usize,
    pub missing: MissingPolicy,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            max_modes: 10,
            prune_weight: 0.005,
            category_threshold: DEFAULT_CATEGORY_THRESHOLD,
            missing: MissingPolicy::Error,
        }
    }
}

/// Encoded rows `M × D` and their layout.
#[derive(Clone, Debug)]
pub struct EncodedTable {
    pub data: Matrix,
    pub layout: ComponentLayout,
}

impl EncodedTable {
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }
}

/// Fitted schema + transformers: encodes raw rows to `x` and back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableCodec {
    pub schema: TableSchema,
    /// One entry per column; `Some` for numeric columns.
    pub transformers: Vec<Option<NumericTransformer>>,
    pub layout: ComponentLayout,
    pub missing: MissingPolicy,
}

impl TableCodec {
    pub fn fit(schema: &TableSchema, table: &RawTable, config: &CodecConfig) -> Result<Self> {
        schema.validate()?;
        if table.is_empty() {
            return Err(Error::EmptyTable);
        }
        let cols = schema.align(table)?;
        let mut transformers = Vec::with_capacity(schema.len());
        for (meta, &j) in schema.columns.iter().zip(&cols) {
            transformers.push(match meta.kind {
                ColumnKind::Categorical => None,
                ColumnKind::Numeric => {
                    let values = table
                        .column(j)
                        .map(|c| parse_cell(&meta.name, c, config.missing))
                        .collect::<Result<Vec<f64>>>()?;
                    Some(fit_numeric_transformer(
                        &values,
                        config.max_modes,
                        config.prune_weight,
                    )?)
                }
            });
        }
        Ok(Self::from_parts(schema.clone(), transformers, config.missing))
    }

    pub fn from_parts(
        schema: TableSchema,
        transformers: Vec<Option<NumericTransformer>>,
        missing: MissingPolicy,
    ) -> Self {
        let sizes: Vec<(ColumnKind, usize)> = schema
            .columns
            .iter()
            .zip(&transformers)
            .map(|(c, t)| match (c.kind, t) {
                (ColumnKind::Categorical, _) => (c.kind, c.categories.len()),
                (ColumnKind::Numeric, Some(t)) => (c.kind, t.mode_count()),
                (ColumnKind::Numeric, None) => panic!("numeric column `{}` lacks a transformer", c.name),
            })
            .collect();
        Self {
            layout: ComponentLayout::from_sizes(&sizes),
            schema,
            transformers,
            missing,
        }
    }

    fn numeric(&self, n: usize) -> &NumericTransformer {
        self.transformers[n].as_ref().expect("numeric column")
    }

    /// Encodes one row given in schema column order.
    pub fn encode_row<R: Rng + ?Sized>(&self, row: &[String], rng: &mut R) -> Result<Vec<f64>> {
        if row.len() != self.schema.len() {
            return Err(Error::DimensionMismatch {
                expected: self.schema.len(),
                found: row.len(),
            });
        }
        let mut x = vec![0.0; self.layout.dim()];
        for (n, (meta, cell)) in self.schema.columns.iter().zip(row).enumerate() {
            let col = &self.layout.columns[n];
            match meta.kind {
                ColumnKind::Categorical => {
                    let k = meta.category_index(cell).ok_or_else(|| Error::UnknownCategory {
                        column: meta.name.clone(),
                        value: cell.clone(),
                    })?;
                    x[col.discrete_offset + k] = 1.0;
                }
                ColumnKind::Numeric => {
                    let v = parse_cell(&meta.name, cell, self.missing)?;
                    let (k, s) = self.numeric(n).encode_value(v, rng);
                    x[col.discrete_offset + k] = 1.0;
                    x[col.continuous.unwrap()] = s;
                }
            }
        }
        Ok(x)
    }

    /// Inverse of [`encode_row`](Self::encode_row); discrete segments are read by argmax.
    pub fn decode_row(&self, x: &[f64]) -> Result<Vec<String>> {
        if x.len() != self.layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.dim(),
                found: x.len(),
            });
        }
        Ok(self
            .schema
            .columns
            .iter()
            .enumerate()
            .map(|(n, meta)| {
                let col = &self.layout.columns[n];
                let seg = &x[col.discrete_offset..col.discrete_offset + col.discrete_len];
                let k = argmax(seg);
                match meta.kind {
                    ColumnKind::Categorical => meta.categories[k].clone(),
                    ColumnKind::Numeric => {
                        let v = self.numeric(n).decode_value(k, x[col.continuous.unwrap()]);
                        format!("{v}")
                    }
                }
            })
            .collect())
    }

    /// Encodes every row; row `i` uses its own generator stream of `seed`.
    pub fn encode_table(&self, table: &RawTable, seed: u64) -> Result<EncodedTable> {
        let cols = self.schema.align(table)?;
        let mut data = Matrix::zeros((table.len(), self.layout.dim()));
        for (i, raw) in table.rows.iter().enumerate() {
            let row: Vec<String> = cols.iter().map(|&j| raw[j].clone()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x = self.encode_row(&row, &mut rng)?;
            data.row_mut(i).assign(&ndarray::ArrayView1::from(&x));
        }
        Ok(EncodedTable {
            data,
            layout: self.layout.clone(),
        })
    }

    pub fn decode_table(&self, data: &Matrix) -> Result<RawTable> {
        let rows = data
            .rows()
            .into_iter()
            .map(|r| self.decode_row(&r.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(RawTable {
            header: self.schema.names(),
            rows,
        })
    }

    /// Parsed values of each numeric column (schema order), `None` for categoricals.
    pub fn numeric_values(&self, table: &RawTable) -> Result<Vec<Option<Vec<f64>>>> {
        let cols = self.schema.align(table)?;
        self.schema
            .columns
            .iter()
            .zip(&cols)
            .map(|(meta, &j)| match meta.kind {
                ColumnKind::Categorical => Ok(None),
                ColumnKind::Numeric => table
                    .column(j)
                    .map(|c| parse_cell(&meta.name, c, self.missing))
                    .collect::<Result<Vec<_>>>()
                    .map(Some),
            })
            .collect()
    }
}

fn parse_cell(column: &str, cell: &str, missing: MissingPolicy) -> Result<f64> {
    match (parse_number(cell), missing) {
        (Some(v), _) => Ok(v),
        (None, MissingPolicy::Sentinel) => Ok(MISSING_SENTINEL),
        (None, MissingPolicy::Error) => Err(Error::Unparsable {
            column: column.to_owned(),
            value: cell.to_owned(),
        }),
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}
