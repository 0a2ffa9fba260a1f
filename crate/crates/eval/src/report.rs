//! Aggregated metric report: JSON for machines, a text table for people.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use taegan::codec::{RawTable, TableSchema};

use crate::error::Result;
use crate::fidelity::{correlation_score, marginal_score};
use crate::gbt::Classifier;
use crate::protocols::{augmentation_eval, discrimination_score, ml_baseline, ml_efficacy, ClassifierScores};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarginalSummary {
    pub discrete: Option<f64>,
    pub continuous: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub cc: Option<f64>,
    pub dc: Option<f64>,
    pub dd: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub marginal: MarginalSummary,
    pub correlation: CorrelationSummary,
    /// Raw real-vs-synthetic classifier metrics; lower is better.
    pub discrimination: Option<ClassifierScores>,
    /// `1 − 2·|v − 0.5|` of the raw discrimination metrics; higher is better.
    pub discrimination_normalized: Option<ClassifierScores>,
    pub efficacy: Option<ClassifierScores>,
    pub efficacy_baseline: Option<ClassifierScores>,
    pub augmentation: Option<ClassifierScores>,
    pub augmentation_baseline: Option<ClassifierScores>,
}

/// Input tables for a full evaluation.
pub struct EvalInputs<'a> {
    pub train: &'a RawTable,
    pub validation: &'a RawTable,
    pub test: &'a RawTable,
    pub synth: &'a RawTable,
    pub schema: &'a TableSchema,
}

impl MetricReport {
    /// Runs every metric that applies: utility metrics need a target column
    /// in the schema, augmentation additionally needs `|synth| = |train|`.
    pub fn compute(inputs: &EvalInputs<'_>, clf: &dyn Classifier, seed: u64) -> Result<Self> {
        let EvalInputs {
            train,
            validation,
            test,
            synth,
            schema,
        } = *inputs;
        let m = marginal_score(train, synth, validation, schema)?;
        let mut report = MetricReport {
            marginal: MarginalSummary {
                discrete: m.discrete,
                continuous: m.continuous,
            },
            ..Default::default()
        };
        if schema.len() >= 2 {
            let c = correlation_score(train, synth, validation, schema)?;
            report.correlation = CorrelationSummary {
                cc: c.cc,
                dc: c.dc,
                dd: c.dd,
            };
        }
        let d = discrimination_score(train, test, synth, schema, clf, seed)?;
        report.discrimination = Some(d);
        report.discrimination_normalized = Some(d.normalized_against_chance());
        if schema.target_index().is_some() {
            report.efficacy = Some(ml_efficacy(synth, test, schema, clf)?);
            report.efficacy_baseline = Some(ml_baseline(train, test, schema, clf)?);
            if synth.len() == train.len() {
                let a = augmentation_eval(train, synth, test, schema, clf)?;
                report.augmentation = Some(a.augmented);
                report.augmentation_baseline = Some(a.baseline);
            }
        }
        Ok(report)
    }

    /// Every populated score, labelled.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let mut push = |name: &str, v: Option<f64>| {
            if let Some(v) = v {
                out.push((name.to_owned(), v));
            }
        };
        push("marginal.discrete", self.marginal.discrete);
        push("marginal.continuous", self.marginal.continuous);
        push("correlation.cc", self.correlation.cc);
        push("correlation.dc", self.correlation.dc);
        push("correlation.dd", self.correlation.dd);
        for (name, s) in [
            ("discrimination", self.discrimination),
            ("discrimination_normalized", self.discrimination_normalized),
            ("efficacy", self.efficacy),
            ("efficacy_baseline", self.efficacy_baseline),
            ("augmentation", self.augmentation),
            ("augmentation_baseline", self.augmentation_baseline),
        ] {
            if let Some(s) = s {
                push(&format!("{name}.acc"), Some(s.acc));
                push(&format!("{name}.f1"), Some(s.f1));
                push(&format!("{name}.auc"), Some(s.auc));
            }
        }
        out
    }

    /// Names of scores outside `[0, 1]`.
    pub fn out_of_range(&self) -> Vec<String> {
        self.entries()
            .into_iter()
            .filter(|(_, v)| !(0.0..=1.0).contains(v))
            .map(|(n, _)| n)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn to_table(&self) -> String {
        let entries = self.entries();
        let width = entries.iter().map(|(n, _)| n.len()).max().unwrap_or(6).max(6);
        let mut s = String::new();
        writeln!(s, "{:<width$}  score", "metric").unwrap();
        writeln!(s, "{}  -----", "-".repeat(width)).unwrap();
        for (n, v) in entries {
            writeln!(s, "{n:<width$}  {v:.4}").unwrap();
        }
        s
    }
}
