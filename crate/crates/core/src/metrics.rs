//! Binary-classifier evaluation metrics and results-table rendering.
//!
//! Everything in this module is a pure function of its inputs: accuracy with
//! a Wald 95% confidence interval, ROC AUC in the Mann-Whitney formulation
//! (ties count 1/2), F1, confusion counts, and a per-experiment results
//! table in text or CSV form.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// z quantile of the two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

/// Decision threshold used to turn sigmoid scores into hard labels.
/// Scores equal to the threshold count as positive.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn check_lengths(predictions: usize, labels: usize) -> Result<()> {
    if predictions != labels {
        return Err(Error::InvalidInput(format!(
            "prediction/label length mismatch: {predictions} vs {labels}"
        )));
    }
    if predictions == 0 {
        return Err(Error::InvalidInput("empty prediction list".into()));
    }
    Ok(())
}

/// Fraction of positions where `predictions[i] == labels[i]`.
pub fn accuracy(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    check_lengths(predictions.len(), labels.len())?;
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Halfwidth of the Wald normal-approximation binomial interval,
/// `z * sqrt(p_hat * (1 - p_hat) / n)`, at z = 1.96.
pub fn wald_ci_halfwidth(p_hat: f64, n: usize) -> f64 {
    wald_ci_halfwidth_z(p_hat, n, Z_95)
}

/// Wald halfwidth at an arbitrary z quantile.
pub fn wald_ci_halfwidth_z(p_hat: f64, n: usize, z: f64) -> f64 {
    assert!(n >= 1, "wald_ci_halfwidth needs n >= 1");
    z * (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

/// Threshold scores into hard {0,1} labels; `score >= threshold` maps to 1.
pub fn binarize(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= threshold)).collect()
}

/// Confusion counts for a binary task with 1 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// F1 = 2tp / (2tp + fp + fn), with the 0/0 case defined as 0.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

/// Tally the confusion counts of hard predictions against labels.
pub fn confusion_counts(predictions: &[u8], labels: &[u8]) -> Result<Confusion> {
    check_lengths(predictions.len(), labels.len())?;
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&p, &l) in predictions.iter().zip(labels) {
        if p > 1 || l > 1 {
            return Err(Error::InvalidInput(format!(
                "labels must be 0 or 1, got prediction={p} label={l}"
            )));
        }
        match (p, l) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 0) => c.tn += 1,
            (0, 1) => c.fn_ += 1,
            _ => unreachable!(),
        }
    }
    Ok(c)
}

/// F1 score of hard predictions, positive class 1.
pub fn f1_score(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    Ok(confusion_counts(predictions, labels)?.f1())
}

/// ROC AUC of real-valued scores against binary labels.
///
/// Computed with the rank formulation of the Mann-Whitney statistic: the
/// probability that a uniformly random positive outscores a uniformly random
/// negative, with tied pairs counted 1/2. Equal to the trapezoidal area
/// under the ROC curve. Errors if only one class is present.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidInput(
            "AUC undefined: labels contain a single class".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Average ranks over tied score groups, then sum the positive ranks.
    let mut rank_sum_pos = 0.0_f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average rank.
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }

    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Evaluation summary for one trained model on one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub experiment_id: String,
    pub n_test: usize,
    pub accuracy: f64,
    pub ci_halfwidth: f64,
    pub auc: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str =
        "experiment_id,n_test,accuracy,ci_halfwidth,auc,f1,tp,fp,tn,fn";

    /// Build the full report from raw sigmoid scores and binary labels,
    /// thresholding at [`DEFAULT_THRESHOLD`].
    pub fn from_scores(experiment_id: &str, scores: &[f64], labels: &[u8]) -> Result<Self> {
        check_lengths(scores.len(), labels.len())?;
        let predictions = binarize(scores, DEFAULT_THRESHOLD);
        let confusion = confusion_counts(&predictions, labels)?;
        let accuracy = confusion.accuracy();
        Ok(MetricsReport {
            experiment_id: experiment_id.to_string(),
            n_test: labels.len(),
            accuracy,
            ci_halfwidth: wald_ci_halfwidth(accuracy, labels.len()),
            auc: auc_roc(scores, labels)?,
            f1: confusion.f1(),
            confusion,
        })
    }

    /// Serialize as a single-report CSV document (header plus one row).
    /// Floats are written at full precision so the file round-trips exactly.
    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.experiment_id,
            self.n_test,
            self.accuracy,
            self.ci_halfwidth,
            self.auc,
            self.f1,
            self.confusion.tp,
            self.confusion.fp,
            self.confusion.tn,
            self.confusion.fn_
        )
    }

    /// Parse a document produced by [`MetricsReport::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Manifest("empty report file".into()))?;
        if header.trim() != Self::CSV_HEADER {
            return Err(Error::Manifest(format!(
                "unexpected report header: {header}"
            )));
        }
        let row = lines
            .next()
            .ok_or_else(|| Error::Manifest("report file has no data row".into()))?;
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Manifest(format!(
                "expected 10 report fields, got {}",
                fields.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Manifest(format!("bad float in report: {s}")))
        };
        let parse_u = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Manifest(format!("bad count in report: {s}")))
        };
        Ok(MetricsReport {
            experiment_id: fields[0].to_string(),
            n_test: parse_u(fields[1])?,
            accuracy: parse_f(fields[2])?,
            ci_halfwidth: parse_f(fields[3])?,
            auc: parse_f(fields[4])?,
            f1: parse_f(fields[5])?,
            confusion: Confusion {
                tp: parse_u(fields[6])?,
                fp: parse_u(fields[7])?,
                tn: parse_u(fields[8])?,
                fn_: parse_u(fields[9])?,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(TableFormat::Text),
            "csv" => Ok(TableFormat::Csv),
            other => Err(Error::InvalidInput(format!(
                "unknown table format {other:?} (expected text or csv)"
            ))),
        }
    }
}

/// Render one row per report, in input order, values rounded to 4 decimals.
pub fn render_results_table(reports: &[MetricsReport], format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut out = String::from("experiment,accuracy,ci_halfwidth,auc,f1\n");
            for r in reports {
                let _ = writeln!(
                    out,
                    "{},{:.4},{:.4},{:.4},{:.4}",
                    r.experiment_id, r.accuracy, r.ci_halfwidth, r.auc, r.f1
                );
            }
            out
        }
        TableFormat::Text => {
            let id_width = reports
                .iter()
                .map(|r| r.experiment_id.len())
                .chain(std::iter::once("experiment".len()))
                .max()
                .unwrap_or(10);
            let mut out = format!(
                "{:<id_width$} | {:<17} | {:<6} | {:<6}\n",
                "experiment", "accuracy", "auc", "f1"
            );
            for r in reports {
                let _ = writeln!(
                    out,
                    "{:<id_width$} | {:.4} +/- {:.4} | {:.4} | {:.4}",
                    r.experiment_id, r.accuracy, r.ci_halfwidth, r.auc, r.f1
                );
            }
            out
        }
    }
}
