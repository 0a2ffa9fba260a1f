use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns with at most this many distinct numeric values are typed categorical.
pub const DEFAULT_CATEGORY_THRESHOLD: usize = 20;

/// A header plus rows of text cells.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        let t = Self { header, rows };
        t.check_rectangular()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn column(&self, idx: usize) -> impl Iterator<Item = &str> + '_ {
        self.rows.iter().map(move |r| r[idx].as_str())
    }

    fn check_rectangular(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != self.header.len() {
                return Err(Error::RaggedRow {
                    row: i + 1,
                    expected: self.header.len(),
                    found: r.len(),
                });
            }
        }
        Ok(())
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> RawTable {
        RawTable {
            header: self.header.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    RawTable::new(header, rows)
}

pub fn write_csv(path: impl AsRef<Path>, table: &RawTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.header)?;
    for r in &table.rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical,
    Numeric,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    /// Ordered category labels; empty for numeric columns.
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub target: bool,
}

impl ColumnMeta {
    pub fn category_index(&self, value: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == value)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<ColumnMeta>,
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnMeta>) -> Result<Self> {
        let s = Self { columns };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        let mut target: Option<&str> = None;
        for c in &self.columns {
            if !names.insert(c.name.as_str()) {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
            if c.kind == ColumnKind::Categorical {
                let distinct: HashSet<&String> = c.categories.iter().collect();
                if c.categories.is_empty() || distinct.len() != c.categories.len() {
                    return Err(Error::BadCategories(c.name.clone()));
                }
            }
            if c.target {
                if let Some(t) = target {
                    return Err(Error::MultipleTargets(t.to_owned(), c.name.clone()));
                }
                target = Some(&c.name);
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn target_index(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.target)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Column positions of `table` in schema order, or an error if a schema
    /// column is missing from its header.
    pub fn align(&self, table: &RawTable) -> Result<Vec<usize>> {
        self.columns
            .iter()
            .map(|c| {
                table.column_index(&c.name).ok_or(Error::DimensionMismatch {
                    expected: self.len(),
                    found: table.header.len(),
                })
            })
            .collect()
    }
}

/// Per-column typing overrides, keyed by column name.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnOverride {
    pub kind: Option<ColumnKind>,
    pub target: Option<bool>,
    pub categories: Option<Vec<String>>,
}

/// Parsed schema override file:
///
/// ```toml
/// [income]
/// kind = "categorical"
/// target = true
/// ```
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SchemaOverrides(pub BTreeMap<String, ColumnOverride>);

impl SchemaOverrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::SchemaFile(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Types every column of `table`.
///
/// Without an override a column is numeric iff every non-empty cell parses as
/// a number and it has more than `threshold` distinct values.
pub fn infer_schema(
    table: &RawTable,
    overrides: &SchemaOverrides,
    threshold: usize,
) -> Result<TableSchema> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    table.check_rectangular()?;
    for name in overrides.0.keys() {
        if table.column_index(name).is_none() {
            return Err(Error::UnknownOverride(name.clone()));
        }
    }

    let columns = table
        .header
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let ov = overrides.0.get(name).cloned().unwrap_or_default();
            let distinct: BTreeSet<&str> = table.column(j).collect();
            let kind = ov.kind.unwrap_or_else(|| {
                let all_numeric = distinct
                    .iter()
                    .filter(|c| !c.trim().is_empty())
                    .all(|c| parse_number(c).is_some());
                if all_numeric && distinct.len() > threshold {
                    ColumnKind::Numeric
                } else {
                    ColumnKind::Categorical
                }
            });
            let categories = match kind {
                ColumnKind::Numeric => Vec::new(),
                ColumnKind::Categorical => ov
                    .categories
                    .unwrap_or_else(|| distinct.iter().map(|s| (*s).to_owned()).collect()),
            };
            ColumnMeta {
                name: name.clone(),
                kind,
                categories,
                target: ov.target.unwrap_or(false),
            }
        })
        .collect();
    TableSchema::new(columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(header: &[&str], rows: Vec<Vec<String>>) -> RawTable {
        RawTable::new(header.iter().map(|s| s.to_string()).collect(), rows).unwrap()
    }

    #[test]
    fn classifies_by_rule() {
        let rows = (0..40)
            .map(|i| {
                vec![
                    if i % 2 == 0 { "a" } else { "b" }.to_string(),
                    format!("{}", 1.5 + i as f64 * 0.5),
                    format!("{}", i % 2),
                ]
            })
            .collect();
        let t = table(&["x", "y", "z"], rows);
        let s = infer_schema(&t, &SchemaOverrides::default(), DEFAULT_CATEGORY_THRESHOLD).unwrap();
        let kinds: Vec<_> = s.columns.iter().map(|c| c.kind).collect();
        assert_eq!(
            kinds,
            vec![ColumnKind::Categorical, ColumnKind::Numeric, ColumnKind::Categorical]
        );
        assert_eq!(s.columns[0].categories, vec!["a", "b"]);
        assert_eq!(s.columns[2].categories, vec!["0", "1"]);
    }

    #[test]
    fn override_wins() {
        let rows = (0..40).map(|i| vec![i.to_string()]).collect();
        let t = table(&["n"], rows);
        let ov = SchemaOverrides::from_toml("[n]\nkind = \"categorical\"\n").unwrap();
        let s = infer_schema(&t, &ov, DEFAULT_CATEGORY_THRESHOLD).unwrap();
        assert_eq!(s.columns[0].kind, ColumnKind::Categorical);
        assert_eq!(s.columns[0].categories.len(), 40);
    }

    #[test]
    fn header_only_is_empty_table() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        std::fs::write(&p, "a,b\n").unwrap();
        let t = read_csv(&p).unwrap();
        let err = infer_schema(&t, &SchemaOverrides::default(), 20).unwrap_err();
        assert_eq!(err.to_string(), "empty table");
    }

    #[test]
    fn ragged_rows_and_unknown_override_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "a,b\n1,2\n3\n").unwrap();
        assert!(matches!(read_csv(&p), Err(Error::RaggedRow { row: 2, .. })));

        let t = table(&["a"], vec![vec!["x".into()]]);
        let ov = SchemaOverrides::from_toml("[nope]\ntarget = true\n").unwrap();
        assert!(matches!(
            infer_schema(&t, &ov, 20),
            Err(Error::UnknownOverride(_))
        ));
    }

    #[test]
    fn at_most_one_target() {
        let t = table(&["a", "b"], vec![vec!["x".into(), "y".into()]]);
        let ov = SchemaOverrides::from_toml("[a]\ntarget = true\n[b]\ntarget = true\n").unwrap();
        assert!(matches!(
            infer_schema(&t, &ov, 20),
            Err(Error::MultipleTargets(..))
        ));
    }

    #[test]
    fn csv_round_trip_with_quotes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.csv");
        let t = table(
            &["name", "v"],
            vec![vec!["a, \"quoted\" b".into(), "1".into()]],
        );
        write_csv(&p, &t).unwrap();
        assert_eq!(read_csv(&p).unwrap(), t);
    }
}
