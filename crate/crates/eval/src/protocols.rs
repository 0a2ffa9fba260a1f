//! Classifier-based protocols: real-vs-synthetic discrimination,
//! train-on-synthetic efficacy and augmentation.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use taegan::codec::{parse_number, ColumnKind, RawTable, TableSchema};

use crate::error::{EvalError, Result};
use crate::gbt::{argmax, Classifier, FeatureMatrix};
use crate::metrics::{accuracy, roc_auc_ovr, weighted_f1};

/// Accuracy, weighted F1 and ROC AUC of one fitted classifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierScores {
    pub acc: f64,
    pub f1: f64,
    pub auc: f64,
}

impl ClassifierScores {
    /// `1 − 2·|v − 0.5|` on every metric: 1 when the classifier is at chance.
    pub fn normalized_against_chance(&self) -> Self {
        let f = |v: f64| (1.0 - 2.0 * (v - 0.5).abs()).clamp(0.0, 1.0);
        Self {
            acc: f(self.acc),
            f1: f(self.f1),
            auc: f(self.auc),
        }
    }
}

/// Turns rows into numeric features: numeric cells as parsed, categorical
/// cells one-hot over the schema's categories (unknown values map to all
/// zeros). One column may be excluded, typically the target.
pub struct FeatureEncoder<'a> {
    schema: &'a TableSchema,
    exclude: Option<usize>,
}

impl<'a> FeatureEncoder<'a> {
    pub fn new(schema: &'a TableSchema, exclude: Option<usize>) -> Self {
        Self { schema, exclude }
    }

    pub fn width(&self) -> usize {
        self.schema
            .columns
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != self.exclude)
            .map(|(_, c)| match c.kind {
                ColumnKind::Categorical => c.categories.len(),
                ColumnKind::Numeric => 1,
            })
            .sum()
    }

    pub fn encode(&self, table: &RawTable) -> Result<FeatureMatrix> {
        let idx = align(self.schema, table)?;
        let mut rows = Vec::with_capacity(table.len());
        for row in &table.rows {
            let mut f = Vec::with_capacity(self.width());
            for (i, (meta, &j)) in self.schema.columns.iter().zip(&idx).enumerate() {
                if Some(i) == self.exclude {
                    continue;
                }
                let cell = &row[j];
                match meta.kind {
                    ColumnKind::Categorical => {
                        let hot = meta.category_index(cell);
                        f.extend((0..meta.categories.len()).map(|k| if Some(k) == hot { 1.0 } else { 0.0 }));
                    }
                    ColumnKind::Numeric => f.push(parse_number(cell).ok_or_else(|| EvalError::Parse {
                        column: meta.name.clone(),
                        value: cell.clone(),
                    })?),
                }
            }
            rows.push(f);
        }
        Ok(FeatureMatrix::from_rows(&rows))
    }
}

fn align(schema: &TableSchema, table: &RawTable) -> Result<Vec<usize>> {
    schema.align(table).map_err(|_| {
        EvalError::SchemaMismatch(format!(
            "expected columns {:?}, found {:?}",
            schema.names(),
            table.header
        ))
    })
}

fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

fn score(clf: &dyn Classifier, x_train: &FeatureMatrix, y_train: &[usize], n_classes: usize, x_test: &FeatureMatrix, y_test: &[usize]) -> Result<ClassifierScores> {
    let model = clf.fit(x_train, y_train, n_classes)?;
    let proba = model.predict_proba(x_test);
    let pred: Vec<usize> = proba.iter().map(|p| argmax(p)).collect();
    Ok(ClassifierScores {
        acc: accuracy(y_test, &pred),
        f1: weighted_f1(y_test, &pred),
        auc: roc_auc_ovr(y_test, &proba),
    })
}

/// Trains a classifier to tell real rows (label 1) from synthetic ones
/// (label 0) and scores it on held-out data. Lower is better.
///
/// The synthetic table is split 4:1 after a seeded shuffle. Training uses
/// `train_real` against the larger part, test uses `test_real` against the
/// smaller part; each side is capped to the smaller of its two sources.
/// Real training rows identical to a held-out synthetic row are dropped one
/// for one before capping.
pub fn discrimination_score(
    train_real: &RawTable,
    test_real: &RawTable,
    synth: &RawTable,
    schema: &TableSchema,
    clf: &dyn Classifier,
    seed: u64,
) -> Result<ClassifierScores> {
    for (what, t) in [("real training table", train_real), ("real test table", test_real)] {
        if t.is_empty() {
            return Err(EvalError::TooSmall { what, need: 1, got: 0 });
        }
    }
    if synth.len() < 5 {
        return Err(EvalError::TooSmall {
            what: "synthetic table for a 4:1 split",
            need: 5,
            got: synth.len(),
        });
    }
    let enc = FeatureEncoder::new(schema, None);
    let (xr, xt, xs) = (enc.encode(train_real)?, enc.encode(test_real)?, enc.encode(synth)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let synth_idx = shuffled(synth.len(), &mut rng);
    let cut = synth.len() * 4 / 5;
    let (s_train, s_test) = synth_idx.split_at(cut);
    let r_train = drop_duplicates_of(&xr, shuffled(train_real.len(), &mut rng), &xs, s_test);
    let r_test = shuffled(test_real.len(), &mut rng);

    let n_tr = r_train.len().min(s_train.len());
    let n_te = r_test.len().min(s_test.len());
    let x_train = xr.select(&r_train[..n_tr]).vstack(&xs.select(&s_train[..n_tr]));
    let x_test = xt.select(&r_test[..n_te]).vstack(&xs.select(&s_test[..n_te]));
    let labels = |n: usize| -> Vec<usize> { (0..2 * n).map(|i| usize::from(i < n)).collect() };
    score(clf, &x_train, &labels(n_tr), 2, &x_test, &labels(n_te))
}

/// Removes from `rows` of `x` one row per exact duplicate among `held_out`
/// rows of `y`, so copied rows are never seen with the opposite label during
/// training.
fn drop_duplicates_of(x: &FeatureMatrix, rows: Vec<usize>, y: &FeatureMatrix, held_out: &[usize]) -> Vec<usize> {
    let key = |m: &FeatureMatrix, r: usize| -> Vec<u64> { (0..m.cols()).map(|c| m.get(r, c).to_bits()).collect() };
    let mut pending: HashMap<Vec<u64>, usize> = HashMap::new();
    for &r in held_out {
        *pending.entry(key(y, r)).or_default() += 1;
    }
    rows.into_iter()
        .filter(|&r| match pending.get_mut(&key(x, r)) {
            Some(n) if *n > 0 => {
                *n -= 1;
                false
            }
            _ => true,
        })
        .collect()
}

/// Target column index and the sorted class labels seen across `tables`.
fn target_space(schema: &TableSchema, tables: &[&RawTable]) -> Result<(usize, Vec<String>)> {
    let t = schema.target_index().ok_or(EvalError::MissingTarget)?;
    if schema.columns[t].kind != ColumnKind::Categorical {
        return Err(EvalError::SchemaMismatch(format!(
            "target column {:?} must be categorical",
            schema.columns[t].name
        )));
    }
    let mut classes = BTreeSet::new();
    for table in tables {
        let j = align(schema, table)?[t];
        classes.extend(table.column(j).map(str::to_owned));
    }
    Ok((t, classes.into_iter().collect()))
}

fn labels_of(schema: &TableSchema, table: &RawTable, target: usize, classes: &[String]) -> Result<Vec<usize>> {
    let j = align(schema, table)?[target];
    Ok(table
        .column(j)
        .map(|v| classes.iter().position(|c| c == v).expect("class space covers every table"))
        .collect())
}

/// Train on `train`, test on `test_real`, predicting the schema's target.
fn utility(train: &RawTable, test_real: &RawTable, schema: &TableSchema, clf: &dyn Classifier) -> Result<ClassifierScores> {
    let (t, classes) = target_space(schema, &[train, test_real])?;
    let y_train = labels_of(schema, train, t, &classes)?;
    let y_test = labels_of(schema, test_real, t, &classes)?;
    let present: BTreeSet<usize> = y_train.iter().copied().collect();
    if let Some(&missing) = y_test.iter().find(|c| !present.contains(c)) {
        return Err(EvalError::ClassMissing(classes[missing].clone()));
    }
    let enc = FeatureEncoder::new(schema, Some(t));
    score(clf, &enc.encode(train)?, &y_train, classes.len(), &enc.encode(test_real)?, &y_test)
}

/// Train on synthetic rows, test on real rows.
pub fn ml_efficacy(train_synth: &RawTable, test_real: &RawTable, schema: &TableSchema, clf: &dyn Classifier) -> Result<ClassifierScores> {
    utility(train_synth, test_real, schema, clf)
}

/// Train on real rows, test on real rows: the reference for [`ml_efficacy`].
pub fn ml_baseline(train_real: &RawTable, test_real: &RawTable, schema: &TableSchema, clf: &dyn Classifier) -> Result<ClassifierScores> {
    utility(train_real, test_real, schema, clf)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationScores {
    pub augmented: ClassifierScores,
    pub baseline: ClassifierScores,
}

/// Train on real plus an equal number of synthetic rows, test on real rows;
/// the real-only model is reported alongside.
pub fn augmentation_eval(
    train_real: &RawTable,
    synth_same_size: &RawTable,
    test_real: &RawTable,
    schema: &TableSchema,
    clf: &dyn Classifier,
) -> Result<AugmentationScores> {
    if synth_same_size.len() != train_real.len() {
        return Err(EvalError::SizeMismatch {
            expected: train_real.len(),
            found: synth_same_size.len(),
        });
    }
    let cols = align(schema, synth_same_size)?;
    let real_cols = align(schema, train_real)?;
    let mut combined = RawTable {
        header: schema.names(),
        rows: Vec::with_capacity(2 * train_real.len()),
    };
    for (table, idx) in [(train_real, &real_cols), (synth_same_size, &cols)] {
        for r in &table.rows {
            combined.rows.push(idx.iter().map(|&j| r[j].clone()).collect());
        }
    }
    Ok(AugmentationScores {
        augmented: utility(&combined, test_real, schema, clf)?,
        baseline: utility(train_real, test_real, schema, clf)?,
    })
}
