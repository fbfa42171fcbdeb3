use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::write_file;
use crate::error::{Error, Result};

/// 2×2 confusion counts with class 1 as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn correct(&self) -> usize {
        self.tp + self.tn
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_stats(tp: usize, fp: usize, fn_: usize) -> ClassStats {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassStats {
        precision,
        recall,
        f1,
    }
}

/// Binary classification metrics for one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: Confusion,
    /// Fraction in `[0, 1]`.
    pub accuracy: f64,
    pub f1_macro: f64,
    /// Indexed by class.
    pub per_class: [ClassStats; 2],
}

/// Accuracy, per-class precision/recall/F1 and macro F1 for binary labels.
pub fn metrics(preds: &[usize], labels: &[usize]) -> Result<Metrics> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Data("metrics need at least one prediction".into()));
    }
    let mut c = Confusion::default();
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            (0, 0) => c.tn += 1,
            _ => return Err(Error::Data(format!("non-binary class pair ({p}, {l})"))),
        }
    }
    let per_class = [
        class_stats(c.tn, c.fn_, c.fp),
        class_stats(c.tp, c.fp, c.fn_),
    ];
    Ok(Metrics {
        confusion: c,
        accuracy: ratio(c.correct(), c.total()),
        f1_macro: (per_class[0].f1 + per_class[1].f1) / 2.0,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub subject_id: u16,
    pub metrics: Metrics,
}

/// Per-subject rows plus aggregate means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classifier: String,
    pub rows: Vec<SubjectResult>,
}

pub const REPORT_HEADER: &str = "subject,classifier,accuracy_pct,f1_macro,tp,fp,fn,tn";

impl EvalReport {
    /// Mean per-subject accuracy, in percent.
    pub fn mean_accuracy_pct(&self) -> f64 {
        self.mean(|m| 100.0 * m.accuracy)
    }

    pub fn mean_f1(&self) -> f64 {
        self.mean(|m| m.f1_macro)
    }

    fn mean(&self, f: impl Fn(&Metrics) -> f64) -> f64 {
        if self.rows.is_empty() {
            return f64::NAN;
        }
        self.rows.iter().map(|r| f(&r.metrics)).sum::<f64>() / self.rows.len() as f64
    }

    /// One row per subject followed by a `mean` row (confusion counts summed).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        let mut total = Confusion::default();
        for r in &self.rows {
            let c = r.metrics.confusion;
            total.tp += c.tp;
            total.fp += c.fp;
            total.fn_ += c.fn_;
            total.tn += c.tn;
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{},{},{},{}",
                r.subject_id,
                self.classifier,
                100.0 * r.metrics.accuracy,
                r.metrics.f1_macro,
                c.tp,
                c.fp,
                c.fn_,
                c.tn
            );
        }
        let _ = writeln!(
            out,
            "mean,{},{:.6},{:.6},{},{},{},{}",
            self.classifier,
            self.mean_accuracy_pct(),
            self.mean_f1(),
            total.tp,
            total.fp,
            total.fn_,
            total.tn
        );
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), self.to_csv().as_bytes())
    }

    /// Fixed-width table: one line per subject, then the means.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "classifier: {}", self.classifier);
        let _ = writeln!(
            out,
            "{:>8} {:>9} {:>8} {:>8} {:>8} {:>6}",
            "subject", "acc %", "F1", "F1[0]", "F1[1]", "n"
        );
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{:>8} {:>9.1} {:>8.3} {:>8.3} {:>8.3} {:>6}",
                r.subject_id,
                100.0 * m.accuracy,
                m.f1_macro,
                m.per_class[0].f1,
                m.per_class[1].f1,
                m.confusion.total()
            );
        }
        let _ = writeln!(
            out,
            "{:>8} {:>9.1} {:>8.3}",
            "mean",
            self.mean_accuracy_pct(),
            self.mean_f1()
        );
        out
    }
}
