//! Classification and reconstruction scores, and FL-vs-centralized reports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{LabelSet, TimeSeriesPanel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassificationScores {
    /// Scores from raw counts; every zero denominator yields 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    /// Counts flags of two equally long boolean sequences.
    pub fn from_flags<'a>(
        pred: impl IntoIterator<Item = &'a bool>,
        truth: impl IntoIterator<Item = &'a bool>,
    ) -> Self {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (&p, &t) in pred.into_iter().zip(truth) {
            match (p, t) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        Self::from_counts(tp, fp, fn_)
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }
}

/// Precision, recall and F1 over every (cell, signal, time) triple.
pub fn prf1(pred: &LabelSet, truth: &LabelSet) -> Result<ClassificationScores> {
    if !pred.same_layout(truth) {
        return Err(Error::shape(
            "predicted and reference labels differ in layout".to_string(),
        ));
    }
    Ok(pred
        .cells()
        .iter()
        .zip(truth.cells())
        .fold(ClassificationScores::default(), |acc, (p, t)| {
            acc.merge(&ClassificationScores::from_flags(p.iter(), t.iter()))
        }))
}

/// Mean squared difference over evaluable points (all points when `evaluable` is `None`).
pub fn mse_metric(
    pred: &TimeSeriesPanel,
    target: &TimeSeriesPanel,
    evaluable: Option<&[Vec<bool>]>,
) -> Result<f64> {
    if pred.num_cells() != target.num_cells()
        || pred.num_signals() != target.num_signals()
        || pred.len() != target.len()
    {
        return Err(Error::shape("panels differ in shape".to_string()));
    }
    if let Some(mask) = evaluable {
        if mask.len() != pred.num_cells() || mask.iter().any(|m| m.len() != pred.len()) {
            return Err(Error::shape(
                "evaluable mask does not match panel".to_string(),
            ));
        }
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for c in 0..pred.num_cells() {
        for ((s, t), p) in pred.cell(c).indexed_iter() {
            if evaluable.is_some_and(|m| !m[c][t]) {
                continue;
            }
            let d = p - target.cell(c)[[s, t]];
            sum += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no evaluable points".into()));
    }
    Ok(sum / count as f64)
}

/// Centralized reference run that FL detections are scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct ClReference {
    pub panel_fingerprint: String,
    pub labels: LabelSet,
    pub loss: f64,
}

/// Final outcome of one federated strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct FlOutcome {
    pub strategy: String,
    pub panel_fingerprint: String,
    pub detections: LabelSet,
    pub loss: f64,
    pub footprint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    pub dataset: u8,
    pub loss: f64,
    pub loss_ratio: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub footprint: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Scores each FL run against the centralized reference labels.
///
/// The first row is the reference itself (loss ratio 1, footprint 0).
pub fn fl_vs_cl_report(runs: &[FlOutcome], reference: &ClReference, dataset: u8) -> Result<Report> {
    let mut rows = vec![ReportRow {
        strategy: "Centralized".into(),
        dataset,
        loss: reference.loss,
        loss_ratio: 1.0,
        precision: 1.0,
        recall: 1.0,
        f1: 1.0,
        footprint: 0.0,
    }];
    for run in runs {
        if run.panel_fingerprint != reference.panel_fingerprint {
            return Err(Error::Data(format!(
                "{}: panel fingerprint {} differs from reference {}",
                run.strategy, run.panel_fingerprint, reference.panel_fingerprint
            )));
        }
        let s = prf1(&run.detections, &reference.labels)?;
        rows.push(ReportRow {
            strategy: run.strategy.clone(),
            dataset,
            loss: run.loss,
            loss_ratio: if reference.loss > 0.0 {
                run.loss / reference.loss
            } else {
                f64::NAN
            },
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            footprint: run.footprint,
        });
    }
    Ok(Report { rows })
}
