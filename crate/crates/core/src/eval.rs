//! Confusion matrices and multi-class metrics.
//!
//! Rows of the matrix are true classes and columns are predictions. The
//! per-class precision and recall follow a row/column assignment that is the
//! transpose of the usual one:
//!
//! - precision `P_i = cm[i][i] / row_sum(i)`
//! - recall `R_i = cm[i][i] / col_sum(i)`
//!
//! In the common convention these two formulas are swapped. Per-class
//! accuracy counts the examples both correctly placed in and correctly kept
//! out of class `i`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    /// `counts[i][j]`: examples of true class `i` predicted as class `j`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = classes.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidInput(format!(
                "confusion matrix must be {k}x{k} for {k} classes"
            )));
        }
        Ok(Self { classes, counts })
    }

    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

pub fn confusion<T, P, A>(truth: &[T], predicted: &[P], alphabet: &[A]) -> Result<ConfusionMatrix>
where
    T: AsRef<str>,
    P: AsRef<str>,
    A: AsRef<str>,
{
    if truth.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let classes: Vec<String> = alphabet.iter().map(|a| a.as_ref().to_string()).collect();
    let index = |l: &str| {
        classes
            .iter()
            .position(|c| c == l)
            .ok_or_else(|| Error::InvalidInput(format!("label {l:?} is not one of {classes:?}")))
    };
    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (t, p) in truth.iter().zip(predicted) {
        counts[index(t.as_ref())?][index(p.as_ref())?] += 1;
    }
    ConfusionMatrix::new(classes, counts)
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * (precision * recall) / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// The row of this class is empty, so precision was reported as 0.
    pub precision_undefined: bool,
    /// The column of this class is empty, so recall was reported as 0.
    pub recall_undefined: bool,
}

fn require_nonempty(cm: &ConfusionMatrix) -> Result<u64> {
    match cm.total() {
        0 => Err(Error::InvalidInput("confusion matrix is empty".into())),
        total => Ok(total),
    }
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> Result<Vec<ClassMetrics>> {
    let total = require_nonempty(cm)?;
    Ok((0..cm.k())
        .map(|i| {
            let diag = cm.counts[i][i];
            let (row, col) = (cm.row_sum(i), cm.col_sum(i));
            let precision = if row == 0 {
                0.0
            } else {
                diag as f64 / row as f64
            };
            let recall = if col == 0 {
                0.0
            } else {
                diag as f64 / col as f64
            };
            // counts outside both row i and column i
            let rejected = total + diag - row - col;
            ClassMetrics {
                label: cm.classes[i].clone(),
                accuracy: (diag + rejected) as f64 / total as f64,
                precision,
                recall,
                f_measure: f_measure(precision, recall),
                precision_undefined: row == 0,
                recall_undefined: col == 0,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub overall_accuracy: f64,
}

/// Unweighted means of the per-class metrics plus trace / total.
pub fn aggregate(cm: &ConfusionMatrix) -> Result<Aggregate> {
    let total = require_nonempty(cm)?;
    let per = per_class_metrics(cm)?;
    let mean = |f: fn(&ClassMetrics) -> f64| per.iter().map(f).sum::<f64>() / per.len() as f64;
    Ok(Aggregate {
        accuracy: mean(|m| m.accuracy),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f_measure: mean(|m| m.f_measure),
        overall_accuracy: cm.trace() as f64 / total as f64,
    })
}

/// Percentage with two decimals, truncated: `0.88888` gives `"88.88%"`.
pub fn percent_truncated(v: f64) -> String {
    // the epsilon absorbs binary representation error, e.g. 0.29 * 10000
    let hundredths = (v * 10_000.0 + 1e-7).floor() as i64;
    format!("{}.{:02}%", hundredths / 100, (hundredths % 100).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub aggregate: Aggregate,
}

impl EvaluationReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        Ok(Self {
            per_class: per_class_metrics(&confusion)?,
            aggregate: aggregate(&confusion)?,
            confusion,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-class table, aggregate table and the confusion matrix as aligned
    /// plain text.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let width = self
            .confusion
            .classes
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(5);
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}",
            "Class", "A", "P", "R", "FM"
        );
        for m in &self.per_class {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}",
                m.label,
                percent_truncated(m.accuracy),
                percent_truncated(m.precision),
                percent_truncated(m.recall),
                percent_truncated(m.f_measure),
            );
        }
        out.push('\n');
        let a = &self.aggregate;
        let _ = writeln!(
            out,
            "{:>8}  {:>8}  {:>8}  {:>8}  {:>8}",
            "mean A", "mean P", "mean R", "mean FM", "OvA"
        );
        let _ = writeln!(
            out,
            "{:>8}  {:>8}  {:>8}  {:>8}  {:>8}",
            percent_truncated(a.accuracy),
            percent_truncated(a.precision),
            percent_truncated(a.recall),
            percent_truncated(a.f_measure),
            percent_truncated(a.overall_accuracy),
        );
        out.push('\n');
        let cell = self
            .confusion
            .counts
            .iter()
            .flatten()
            .map(|c| c.to_string().len())
            .max()
            .unwrap_or(1)
            .max(width);
        let _ = write!(out, "{:<width$}", "true\\pred");
        for c in &self.confusion.classes {
            let _ = write!(out, "  {c:>cell$}");
        }
        out.push('\n');
        for (c, row) in self.confusion.classes.iter().zip(&self.confusion.counts) {
            let _ = write!(out, "{c:<width$}");
            for v in row {
                let _ = write!(out, "  {v:>cell$}");
            }
            out.push('\n');
        }
        out
    }
}
