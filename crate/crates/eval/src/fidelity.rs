//! Statistical similarity between real and synthetic tables.
//!
//! Raw column (or column-pair) scores are normalised against the score a
//! held-out real split achieves, `S′ = 1 − Ŝ·|S − Ŝ|`, rescaled into
//! `[0.1, 1]` and aggregated with a harmonic mean per column type.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use taegan::codec::{parse_number, ColumnKind, RawTable, TableSchema};
use taegan::stats;

use crate::error::{EvalError, Result};

/// Quantile bins used for numeric columns.
pub const MARGINAL_BINS: usize = 20;
/// Added to every histogram cell before normalising.
pub const HISTOGRAM_EPS: f64 = 1e-9;

/// A table column in analysable form.
#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Discrete(Vec<String>),
    Numeric(Vec<f64>),
}

/// Columns of `table` in schema order.
pub fn columns(schema: &TableSchema, table: &RawTable) -> Result<Vec<ColumnData>> {
    let idx = schema.align(table).map_err(|_| {
        EvalError::SchemaMismatch(format!(
            "expected columns {:?}, found {:?}",
            schema.names(),
            table.header
        ))
    })?;
    schema
        .columns
        .iter()
        .zip(idx)
        .map(|(meta, j)| match meta.kind {
            ColumnKind::Categorical => Ok(ColumnData::Discrete(table.column(j).map(str::to_owned).collect())),
            ColumnKind::Numeric => table
                .column(j)
                .map(|cell| {
                    parse_number(cell).ok_or_else(|| EvalError::Parse {
                        column: meta.name.clone(),
                        value: cell.to_owned(),
                    })
                })
                .collect::<Result<Vec<f64>>>()
                .map(ColumnData::Numeric),
        })
        .collect()
}

/// Jensen–Shannon divergence (base 2, in `[0, 1]`) between two histograms.
/// Both are smoothed by [`HISTOGRAM_EPS`] and normalised first.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "histograms differ in length");
    let norm = |h: &[f64]| {
        let total: f64 = h.iter().map(|v| v + HISTOGRAM_EPS).sum();
        h.iter().map(|v| (v + HISTOGRAM_EPS) / total).collect::<Vec<_>>()
    };
    let (p, q) = (norm(p), norm(q));
    let kl = |a: &[f64], m: &[f64]| a.iter().zip(m).map(|(a, m)| a * (a / m).log2()).sum::<f64>();
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl(&p, &m) + 0.5 * kl(&q, &m)).clamp(0.0, 1.0)
}

/// `1 − Ŝ·|S − Ŝ|`.
pub fn normalize_score(s: f64, baseline: f64) -> f64 {
    1.0 - baseline * (s - baseline).abs()
}

/// Affine map of `[0, 1]` onto `[0.1, 1]`.
pub fn rescale(s: f64) -> f64 {
    0.1 + 0.9 * s
}

pub fn harmonic_mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.len() as f64 / xs.iter().map(|x| 1.0 / x).sum::<f64>())
}

fn counts_over(values: &[String], cats: &[String]) -> Vec<f64> {
    let pos: BTreeMap<&str, usize> = cats.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut h = vec![0.0; cats.len()];
    for v in values {
        h[pos[v.as_str()]] += 1.0;
    }
    h
}

fn binned(values: &[f64], cuts: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; cuts.len() + 1];
    for &v in values {
        h[stats::bin_of(cuts, v)] += 1.0;
    }
    h
}

/// Per-column result with the raw score, its validation baseline and the
/// normalised value (before rescaling).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScore {
    pub name: String,
    pub discrete: bool,
    pub raw: f64,
    pub baseline: f64,
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalScores {
    pub discrete: Option<f64>,
    pub continuous: Option<f64>,
    pub columns: Vec<ColumnScore>,
}

/// `1 − JS` between the real column and `other`, both histogrammed on the
/// real data's categories or quantile bins.
fn marginal_raw(name: &str, real: &ColumnData, other: &ColumnData, extra_cats: &[&ColumnData]) -> Result<f64> {
    match (real, other) {
        (ColumnData::Discrete(r), ColumnData::Discrete(o)) => {
            let mut cats: BTreeSet<String> = r.iter().cloned().collect();
            cats.extend(o.iter().cloned());
            for c in extra_cats {
                if let ColumnData::Discrete(v) = c {
                    cats.extend(v.iter().cloned());
                }
            }
            let cats: Vec<String> = cats.into_iter().collect();
            Ok(1.0 - js_divergence(&counts_over(r, &cats), &counts_over(o, &cats)))
        }
        (ColumnData::Numeric(r), ColumnData::Numeric(o)) => {
            let bins = MARGINAL_BINS.min(stats::distinct_count(r));
            let cuts = stats::quantile_cuts(r, bins);
            if cuts.is_empty() {
                return Err(EvalError::SingleBin(name.to_owned()));
            }
            Ok(1.0 - js_divergence(&binned(r, &cuts), &binned(o, &cuts)))
        }
        _ => Err(EvalError::SchemaMismatch(format!("column {name:?} changed type"))),
    }
}

/// Raw `1 − JS` per column of `synth` against `real`.
pub fn marginal_raw_scores(real: &RawTable, synth: &RawTable, schema: &TableSchema) -> Result<Vec<f64>> {
    let r = columns(schema, real)?;
    let s = columns(schema, synth)?;
    schema
        .columns
        .iter()
        .enumerate()
        .map(|(i, meta)| marginal_raw(&meta.name, &r[i], &s[i], &[]))
        .collect()
}

pub fn marginal_score(real: &RawTable, synth: &RawTable, validation: &RawTable, schema: &TableSchema) -> Result<MarginalScores> {
    let r = columns(schema, real)?;
    let s = columns(schema, synth)?;
    let v = columns(schema, validation)?;
    let mut out = Vec::with_capacity(schema.len());
    for (i, meta) in schema.columns.iter().enumerate() {
        let raw = marginal_raw(&meta.name, &r[i], &s[i], &[&v[i]])?;
        let baseline = marginal_raw(&meta.name, &r[i], &v[i], &[&s[i]])?;
        out.push(ColumnScore {
            name: meta.name.clone(),
            discrete: meta.kind == ColumnKind::Categorical,
            raw,
            baseline,
            normalized: normalize_score(raw, baseline),
        });
    }
    let agg = |discrete: bool| {
        let xs: Vec<f64> = out.iter().filter(|c| c.discrete == discrete).map(|c| rescale(c.normalized)).collect();
        harmonic_mean(&xs)
    };
    Ok(MarginalScores {
        discrete: agg(true),
        continuous: agg(false),
        columns: out,
    })
}

// ---------------------------------------------------------------------------
// Associations
// ---------------------------------------------------------------------------

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (stats::mean(x), stats::mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    assert!((-1.0..=1.0).contains(&r));
    Some(r)
}

/// Correlation ratio η: square root of between-group over total variance.
pub fn correlation_ratio(groups: &[String], values: &[f64]) -> Option<f64> {
    let mean = stats::mean(values);
    let total: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let distinct: BTreeSet<&String> = groups.iter().collect();
    if total == 0.0 || distinct.len() < 2 {
        return None;
    }
    let mut acc: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (g, v) in groups.iter().zip(values) {
        let e = acc.entry(g).or_default();
        e.0 += v;
        e.1 += 1.0;
    }
    let between: f64 = acc.values().map(|(s, n)| n * (s / n - mean).powi(2)).sum();
    let eta = (between / total).sqrt().clamp(0.0, 1.0);
    assert!((0.0..=1.0).contains(&eta));
    Some(eta)
}

/// Cramér's V over the categories observed in `a` and `b`.
pub fn cramers_v(a: &[String], b: &[String]) -> Option<f64> {
    let ra: Vec<&String> = a.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let rb: Vec<&String> = b.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let k = ra.len().min(rb.len());
    if k < 2 {
        return None;
    }
    let ia: BTreeMap<&String, usize> = ra.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let ib: BTreeMap<&String, usize> = rb.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let mut table = vec![vec![0.0; rb.len()]; ra.len()];
    for (x, y) in a.iter().zip(b) {
        table[ia[x]][ib[y]] += 1.0;
    }
    let n = a.len() as f64;
    let row: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<f64> = (0..rb.len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut chi2 = 0.0;
    for i in 0..ra.len() {
        for j in 0..rb.len() {
            let e = row[i] * col[j] / n;
            chi2 += (table[i][j] - e).powi(2) / e;
        }
    }
    let v = (chi2 / (n * (k - 1) as f64)).sqrt().clamp(0.0, 1.0);
    assert!((0.0..=1.0).contains(&v));
    Some(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    ContinuousContinuous,
    DiscreteContinuous,
    DiscreteDiscrete,
}

impl PairKind {
    /// Width of the association's range.
    pub fn range(self) -> f64 {
        match self {
            PairKind::ContinuousContinuous => 2.0,
            _ => 1.0,
        }
    }
}

fn association(a: &ColumnData, b: &ColumnData) -> Option<(PairKind, f64)> {
    use ColumnData::*;
    match (a, b) {
        (Numeric(x), Numeric(y)) => pearson(x, y).map(|r| (PairKind::ContinuousContinuous, r)),
        (Discrete(g), Numeric(v)) | (Numeric(v), Discrete(g)) => {
            correlation_ratio(g, v).map(|e| (PairKind::DiscreteContinuous, e))
        }
        (Discrete(x), Discrete(y)) => cramers_v(x, y).map(|v| (PairKind::DiscreteDiscrete, v)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub left: String,
    pub right: String,
    pub kind: PairKind,
    pub raw: f64,
    pub baseline: f64,
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationScores {
    pub cc: Option<f64>,
    pub dc: Option<f64>,
    pub dd: Option<f64>,
    pub pairs: Vec<PairScore>,
}

/// `1 − |a − b| / range`.
pub fn association_score(kind: PairKind, a: f64, b: f64) -> f64 {
    (1.0 - (a - b).abs() / kind.range()).clamp(0.0, 1.0)
}

pub fn correlation_score(real: &RawTable, synth: &RawTable, validation: &RawTable, schema: &TableSchema) -> Result<CorrelationScores> {
    if schema.len() < 2 {
        return Err(EvalError::SchemaMismatch("correlation needs at least two columns".into()));
    }
    let r = columns(schema, real)?;
    let s = columns(schema, synth)?;
    let v = columns(schema, validation)?;
    let mut pairs = Vec::new();
    for i in 0..schema.len() {
        for j in i + 1..schema.len() {
            let (left, right) = (&schema.columns[i].name, &schema.columns[j].name);
            let (Some((kind, ar)), Some((_, as_)), Some((_, av))) =
                (association(&r[i], &r[j]), association(&s[i], &s[j]), association(&v[i], &v[j]))
            else {
                log::warn!("skipping pair ({left}, {right}): association undefined on a constant column");
                continue;
            };
            let raw = association_score(kind, ar, as_);
            let baseline = association_score(kind, ar, av);
            pairs.push(PairScore {
                left: left.clone(),
                right: right.clone(),
                kind,
                raw,
                baseline,
                normalized: normalize_score(raw, baseline),
            });
        }
    }
    let agg = |kind: PairKind| {
        let xs: Vec<f64> = pairs.iter().filter(|p| p.kind == kind).map(|p| rescale(p.normalized)).collect();
        harmonic_mean(&xs)
    };
    Ok(CorrelationScores {
        cc: agg(PairKind::ContinuousContinuous),
        dc: agg(PairKind::DiscreteContinuous),
        dd: agg(PairKind::DiscreteDiscrete),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn js_identity_symmetry_and_disjoint() {
        let p = [3.0, 1.0, 0.0];
        let q = [0.0, 1.0, 3.0];
        assert!(js_divergence(&p, &p).abs() < 1e-12);
        assert!((js_divergence(&p, &q) - js_divergence(&q, &p)).abs() < 1e-15);
        assert!((js_divergence(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn normalization_formula() {
        assert_eq!(normalize_score(0.7, 0.7), 1.0);
        assert!((normalize_score(1.0, 0.9) - (1.0 - 0.9 * 0.1)).abs() < 1e-15);
        assert!(normalize_score(0.5, 0.9) < normalize_score(0.6, 0.9));
        assert_eq!(rescale(0.0), 0.1);
        assert_eq!(harmonic_mean(&[0.5, 0.5]), Some(0.5));
    }

    #[test]
    fn cramers_v_perfect_and_independent() {
        let a = s(&["x", "x", "y", "y"]);
        assert!((cramers_v(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = s(&["p", "q", "p", "q"]);
        assert!(cramers_v(&a, &b).unwrap().abs() < 1e-12);
        assert_eq!(cramers_v(&a, &s(&["k"; 4])), None);
    }

    #[test]
    fn correlation_ratio_and_pearson() {
        let g = s(&["a", "a", "b", "b"]);
        assert!((correlation_ratio(&g, &[1.0, 1.0, 5.0, 5.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(correlation_ratio(&g, &[1.0, 5.0, 1.0, 5.0]).unwrap().abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 2.0]), None);
        assert_eq!(association_score(PairKind::ContinuousContinuous, -1.0, 1.0), 0.0);
    }
}
