//! Confusion matrices and multiclass classification metrics.
//!
//! Matrices are oriented with rows = predicted class and columns = actual
//! class. Precision for label `l` divides the diagonal entry by its row sum,
//! recall by its column sum. Four averaging schemes are provided: micro
//! (pooled counts), macro (unweighted mean of per-label values), weighted
//! (support-weighted mean) and samples (mean of per-sample scores). Any 0/0
//! ratio resolves to 0 and is flagged.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header line of the confusion-matrix CSV format.
pub const CSV_ORIENTATION: &str = "# rows=predicted cols=actual";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: u64,
    pub predicted: usize,
    pub actual: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    /// `counts[p][a]`: samples predicted `p` whose actual class is `a`.
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("confusion matrix needs at least one label"));
        }
        if counts.len() != labels.len() || counts.iter().any(|r| r.len() != labels.len()) {
            return Err(Error::invalid(format!(
                "counts must be {0}x{0} to match the label list",
                labels.len()
            )));
        }
        Ok(Self { labels, counts })
    }

    /// Matrix with labels `"0"`, `"1"`, ….
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let labels = (0..counts.len()).map(|i| i.to_string()).collect();
        Self::new(labels, counts)
    }

    pub fn zeros(labels: Vec<String>) -> Result<Self> {
        let n = labels.len();
        Self::new(labels, vec![vec![0; n]; n])
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Sum of row `p`: how often class `p` was predicted.
    pub fn predicted_total(&self, p: usize) -> u64 {
        self.counts[p].iter().sum()
    }

    /// Sum of column `a`: the support of class `a`.
    pub fn actual_total(&self, a: usize) -> u64 {
        self.counts.iter().map(|row| row[a]).sum()
    }

    pub fn transpose(&self) -> Self {
        let n = self.num_classes();
        let counts = (0..n)
            .map(|i| (0..n).map(|j| self.counts[j][i]).collect())
            .collect();
        Self {
            labels: self.labels.clone(),
            counts,
        }
    }

    /// Relabels classes so that new class `i` is old class `perm[i]`, on both axes.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_classes();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::invalid("not a permutation of the label indices"));
        }
        let labels = perm.iter().map(|&p| self.labels[p].clone()).collect();
        let counts = perm
            .iter()
            .map(|&p| perm.iter().map(|&a| self.counts[p][a]).collect())
            .collect();
        Ok(Self { labels, counts })
    }

    fn require_nonempty(&self) -> Result<u64> {
        match self.total() {
            0 => Err(Error::invalid("metrics are undefined on an empty confusion matrix")),
            t => Ok(t),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_ORIENTATION);
        out.push('\n');
        out.push_str(&self.labels.join(","));
        out.push('\n');
        for row in &self.counts {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses the CSV format. `origin` only labels error messages.
    pub fn parse_csv(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        match lines.next() {
            Some((_, l)) if l.trim() == CSV_ORIENTATION => {}
            Some((n, l)) => {
                return Err(err(n, format!("expected orientation header {CSV_ORIENTATION:?}, found {l:?}")))
            }
            None => return Err(err(1, "empty file".into())),
        }
        let (label_line, labels) = match lines.next() {
            Some((n, l)) => (n, l.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>()),
            None => return Err(err(2, "missing label line".into())),
        };
        if labels.iter().any(String::is_empty) {
            return Err(err(label_line, "empty label name".into()));
        }
        let n = labels.len();
        let mut counts = Vec::with_capacity(n);
        for (line_no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if counts.len() == n {
                return Err(err(line_no, format!("more than {n} matrix rows")));
            }
            let row: Vec<u64> = line
                .split(',')
                .map(|cell| {
                    cell.trim()
                        .parse::<u64>()
                        .map_err(|_| err(line_no, format!("invalid count {:?}", cell.trim())))
                })
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(err(line_no, format!("expected {n} columns, found {}", row.len())));
            }
            counts.push(row);
        }
        if counts.len() != n {
            return Err(err(
                label_line + counts.len() + 1,
                format!("expected {n} matrix rows, found {}", counts.len()),
            ));
        }
        Self::new(labels, counts)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.labels.iter().map(|l| l.len()).max().unwrap_or(1).max(5);
        write!(f, "{:>width$}", "p\\a")?;
        for l in &self.labels {
            write!(f, " {l:>width$}")?;
        }
        writeln!(f)?;
        for (l, row) in self.labels.iter().zip(&self.counts) {
            write!(f, "{l:>width$}")?;
            for c in row {
                write!(f, " {c:>width$}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Counts `(predicted, actual)` pairs. Labels are `"0"`…`"L-1"`.
pub fn confusion_from_predictions(records: &[PredictionRecord], num_classes: usize) -> Result<ConfusionMatrix> {
    if num_classes == 0 {
        return Err(Error::invalid("class count must be positive"));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for r in records {
        if r.predicted >= num_classes || r.actual >= num_classes {
            return Err(Error::invalid(format!(
                "record {} has class index out of range for {num_classes} classes",
                r.sample_id
            )));
        }
        counts[r.predicted][r.actual] += 1;
    }
    ConfusionMatrix::from_counts(counts)
}

/// Expands a matrix back into one record per counted sample, row-major.
pub fn records_from_confusion(cm: &ConfusionMatrix) -> Vec<PredictionRecord> {
    let mut records = Vec::with_capacity(cm.total() as usize);
    for (p, row) in cm.counts().iter().enumerate() {
        for (a, &count) in row.iter().enumerate() {
            for _ in 0..count {
                records.push(PredictionRecord {
                    sample_id: records.len() as u64,
                    predicted: p,
                    actual: a,
                });
            }
        }
    }
    records
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when any of the ratios above was 0/0.
    pub zero_division: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn harmonic(p: f64, r: f64) -> (f64, bool) {
    if p + r == 0.0 {
        (0.0, true)
    } else {
        (2.0 * p * r / (p + r), false)
    }
}

pub fn per_label_prf(cm: &ConfusionMatrix) -> Result<Vec<LabelMetrics>> {
    cm.require_nonempty()?;
    Ok((0..cm.num_classes())
        .map(|l| {
            let tp = cm.counts[l][l];
            let support = cm.actual_total(l);
            let (precision, zp) = ratio(tp, cm.predicted_total(l));
            let (recall, zr) = ratio(tp, support);
            let (f1, zf) = harmonic(precision, recall);
            LabelMetrics {
                label: cm.labels[l].clone(),
                precision,
                recall,
                f1,
                support,
                zero_division: zp || zr || zf,
            }
        })
        .collect())
}

pub fn micro_prf(cm: &ConfusionMatrix) -> Result<Prf> {
    let total = cm.require_nonempty()?;
    let tp = cm.trace();
    // every sample carries exactly one predicted and one actual label, so
    // pooled false positives and false negatives both equal total − tp
    let (precision, _) = ratio(tp, total);
    let recall = precision;
    let (f1, _) = harmonic(precision, recall);
    Ok(Prf {
        precision,
        recall,
        f1,
    })
}

pub fn macro_prf(cm: &ConfusionMatrix) -> Result<Prf> {
    let per = per_label_prf(cm)?;
    let n = per.len() as f64;
    Ok(Prf {
        precision: per.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: per.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: per.iter().map(|m| m.f1).sum::<f64>() / n,
    })
}

pub fn weighted_prf(cm: &ConfusionMatrix) -> Result<Prf> {
    let per = per_label_prf(cm)?;
    let total: u64 = per.iter().map(|m| m.support).sum();
    let w = |f: fn(&LabelMetrics) -> f64| {
        per.iter().map(|m| m.support as f64 * f(m)).sum::<f64>() / total as f64
    };
    Ok(Prf {
        precision: w(|m| m.precision),
        recall: w(|m| m.recall),
        f1: w(|m| m.f1),
    })
}

/// Mean over samples of the per-sample precision, recall and F1 between the
/// predicted label set and the true label set.
pub fn samples_prf(records: &[PredictionRecord]) -> Result<Prf> {
    if records.is_empty() {
        return Err(Error::invalid("samples average needs at least one record"));
    }
    let mut ids = HashSet::with_capacity(records.len());
    let mut sum = (0.0, 0.0, 0.0);
    for r in records {
        if !ids.insert(r.sample_id) {
            return Err(Error::invalid(format!("duplicate sample id {}", r.sample_id)));
        }
        // single-label sets {predicted} and {actual}
        let hit = u64::from(r.predicted == r.actual);
        let (p, _) = ratio(hit, 1);
        let (rc, _) = ratio(hit, 1);
        let (f, _) = harmonic(p, rc);
        sum.0 += p;
        sum.1 += rc;
        sum.2 += f;
    }
    let n = records.len() as f64;
    Ok(Prf {
        precision: sum.0 / n,
        recall: sum.1 / n,
        f1: sum.2 / n,
    })
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.require_nonempty()?;
    Ok(cm.trace() as f64 / total as f64)
}

/// Multiclass Matthews correlation from the matrix marginals:
/// `(c·s − Σ pₖtₖ) / √((s² − Σ pₖ²)(s² − Σ tₖ²))`.
pub fn mcc_multiclass(cm: &ConfusionMatrix) -> Result<f64> {
    let s = cm.require_nonempty()? as f64;
    let c = cm.trace() as f64;
    let n = cm.num_classes();
    let p: Vec<f64> = (0..n).map(|k| cm.predicted_total(k) as f64).collect();
    let t: Vec<f64> = (0..n).map(|k| cm.actual_total(k) as f64).collect();
    let pt: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|a| a * a).sum();
    let tt: f64 = t.iter().map(|b| b * b).sum();
    let denom = ((s * s - pp) * (s * s - tt)).sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric(
            "MCC denominator is zero (predictions or actuals concentrated in one class)".into(),
        ));
    }
    Ok((c * s - pt) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Micro,
    Macro,
    Weighted,
    Samples,
}

impl FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(Averaging::Micro),
            "macro" => Ok(Averaging::Macro),
            "weighted" => Ok(Averaging::Weighted),
            "samples" => Ok(Averaging::Samples),
            other => Err(Error::invalid(format!(
                "unknown averaging {other:?}; expected micro, macro, weighted or samples"
            ))),
        }
    }
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Averaging::Micro => "micro",
            Averaging::Macro => "macro",
            Averaging::Weighted => "weighted",
            Averaging::Samples => "samples",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportFlags {
    /// Labels for which some ratio was 0/0 and was reported as 0.
    pub zero_division: Vec<String>,
    /// MCC denominator was zero; `mcc` is reported as 0.
    pub mcc_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_label: Vec<LabelMetrics>,
    pub micro: Prf,
    pub macro_avg: Prf,
    pub weighted: Prf,
    pub samples: Option<Prf>,
    pub accuracy: f64,
    pub mcc: f64,
    pub flags: ReportFlags,
}

// `macro` is a reserved word, so the field is renamed on the wire.
mod wire {
    use super::*;

    #[derive(Serialize, Deserialize)]
    pub(super) struct Report {
        pub per_label: Vec<LabelMetrics>,
        pub micro: Prf,
        #[serde(rename = "macro")]
        pub macro_avg: Prf,
        pub weighted: Prf,
        pub samples: Option<Prf>,
        pub accuracy: f64,
        pub mcc: f64,
        pub flags: ReportFlags,
    }
}

impl MetricsReport {
    pub fn averaged(&self, avg: Averaging) -> Option<Prf> {
        match avg {
            Averaging::Micro => Some(self.micro),
            Averaging::Macro => Some(self.macro_avg),
            Averaging::Weighted => Some(self.weighted),
            Averaging::Samples => self.samples,
        }
    }

    pub fn to_json(&self) -> String {
        let wire = wire::Report {
            per_label: self.per_label.clone(),
            micro: self.micro,
            macro_avg: self.macro_avg,
            weighted: self.weighted,
            samples: self.samples,
            accuracy: self.accuracy,
            mcc: self.mcc,
            flags: self.flags.clone(),
        };
        let mut s = serde_json::to_string_pretty(&wire).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: wire::Report = serde_json::from_str(text)?;
        Ok(Self {
            per_label: w.per_label,
            micro: w.micro,
            macro_avg: w.macro_avg,
            weighted: w.weighted,
            samples: w.samples,
            accuracy: w.accuracy,
            mcc: w.mcc,
            flags: w.flags,
        })
    }
}

/// Assembles every metric. The samples average is included only when
/// per-sample records are supplied.
pub fn report(cm: &ConfusionMatrix, records: Option<&[PredictionRecord]>) -> Result<MetricsReport> {
    let per_label = per_label_prf(cm)?;
    let (mcc, mcc_undefined) = match mcc_multiclass(cm) {
        Ok(v) => (v, false),
        Err(Error::UndefinedMetric(_)) => (0.0, true),
        Err(e) => return Err(e),
    };
    let samples = records.map(samples_prf).transpose()?;
    let flags = ReportFlags {
        zero_division: per_label
            .iter()
            .filter(|m| m.zero_division)
            .map(|m| m.label.clone())
            .collect(),
        mcc_undefined,
    };
    Ok(MetricsReport {
        micro: micro_prf(cm)?,
        macro_avg: macro_prf(cm)?,
        weighted: weighted_prf(cm)?,
        accuracy: accuracy(cm)?,
        per_label,
        samples,
        mcc,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Ensemble confusion matrix on the 8-class endoscopy test split,
    /// rows = predicted, columns = actual.
    pub(crate) fn reference_matrix() -> ConfusionMatrix {
        ConfusionMatrix::from_counts(vec![
            vec![46, 8, 0, 0, 0, 0, 0, 0],
            vec![4, 42, 0, 0, 0, 0, 0, 0],
            vec![0, 0, 39, 0, 0, 7, 0, 0],
            vec![0, 0, 0, 50, 0, 0, 1, 0],
            vec![0, 0, 0, 0, 50, 0, 1, 0],
            vec![0, 0, 11, 0, 0, 43, 0, 0],
            vec![0, 0, 0, 0, 0, 0, 47, 1],
            vec![0, 0, 0, 0, 0, 0, 1, 49],
        ])
        .unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn counts_records() {
        let recs = [
            PredictionRecord { sample_id: 0, predicted: 0, actual: 0 },
            PredictionRecord { sample_id: 1, predicted: 0, actual: 1 },
            PredictionRecord { sample_id: 2, predicted: 1, actual: 1 },
        ];
        let cm = confusion_from_predictions(&recs, 2).unwrap();
        assert_eq!(cm.counts(), &[vec![1, 1], vec![0, 1]]);
        assert_eq!(cm.total(), 3);
    }

    #[test]
    fn empty_records_give_zero_matrix() {
        let cm = confusion_from_predictions(&[], 3).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(accuracy(&cm).is_err());
        assert!(report(&cm, None).is_err());
    }

    #[test]
    fn out_of_range_record_is_rejected() {
        let recs = [PredictionRecord { sample_id: 0, predicted: 2, actual: 0 }];
        assert!(confusion_from_predictions(&recs, 2).is_err());
    }

    #[test]
    fn reference_matrix_round_trips_through_records() {
        let cm = reference_matrix();
        let recs = records_from_confusion(&cm);
        assert_eq!(recs.len(), 400);
        assert_eq!(confusion_from_predictions(&recs, 8).unwrap(), cm);
    }

    #[test]
    fn per_label_on_reference_matrix() {
        let per = per_label_prf(&reference_matrix()).unwrap();
        // class D, normal cecum
        assert!(close(per[3].precision, 50.0 / 51.0, 1e-15));
        assert_eq!(per[3].recall, 1.0);
        let recalls: Vec<f64> = per.iter().map(|m| m.recall).collect();
        let expected = [0.92, 0.84, 0.78, 1.0, 1.0, 0.86, 0.94, 0.98];
        for (r, e) in recalls.iter().zip(expected) {
            assert!(close(*r, e, 1e-15));
        }
        assert!(per.iter().all(|m| m.support == 50));
    }

    #[test]
    fn averages_on_reference_matrix() {
        let cm = reference_matrix();
        let micro = micro_prf(&cm).unwrap();
        assert!(close(micro.precision, 0.915, 1e-15));
        assert!(close(micro.recall, 0.915, 1e-15));
        assert!(close(micro.f1, 0.915, 1e-15));
        let mac = macro_prf(&cm).unwrap();
        let wtd = weighted_prf(&cm).unwrap();
        // oracle: mean of the eight row-wise precisions
        let row_prec = [46.0 / 54.0, 42.0 / 46.0, 39.0 / 46.0, 50.0 / 51.0, 50.0 / 51.0, 43.0 / 54.0, 47.0 / 48.0, 49.0 / 50.0];
        let oracle_p = row_prec.iter().sum::<f64>() / 8.0;
        assert!(close(mac.precision, oracle_p, 1e-15));
        assert!(close(mac.precision, 0.916121086719712, 1e-12));
        assert!(close(mac.f1, 0.9148025193512286, 1e-12));
        assert!(close(mac.recall, 0.915, 1e-15));
        assert!(close(wtd.recall, 0.915, 1e-15));
        assert!(close(wtd.precision, mac.precision, 1e-15));
    }

    #[test]
    fn accuracy_and_mcc_on_reference_matrix() {
        let cm = reference_matrix();
        assert_eq!(accuracy(&cm).unwrap(), 366.0 / 400.0);
        let mcc = mcc_multiclass(&cm).unwrap();
        assert!(close(mcc, 0.903, 0.001));
        assert!(close(mcc, 0.9030829418209976, 1e-12));
    }

    #[test]
    fn perfect_and_inverted_classifiers() {
        let id = ConfusionMatrix::from_counts(vec![vec![3, 0, 0], vec![0, 2, 0], vec![0, 0, 5]]).unwrap();
        let r = report(&id, None).unwrap();
        assert!(r.per_label.iter().all(|m| m.precision == 1.0 && m.recall == 1.0 && m.f1 == 1.0));
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.mcc, 1.0);
        // odd orders put one anti-diagonal cell on the diagonal, so use 2 and 4
        let anti2 = ConfusionMatrix::from_counts(vec![vec![0, 3], vec![5, 0]]).unwrap();
        assert_eq!(accuracy(&anti2).unwrap(), 0.0);
        let anti4 = ConfusionMatrix::from_counts(
            (0..4).map(|p| (0..4).map(|a| u64::from(p + a == 3) * 2).collect()).collect(),
        )
        .unwrap();
        assert_eq!(accuracy(&anti4).unwrap(), 0.0);
    }

    #[test]
    fn absent_label_resolves_to_zero_and_is_flagged() {
        let cm = ConfusionMatrix::from_counts(vec![vec![2, 1, 0], vec![0, 3, 0], vec![0, 0, 0]]).unwrap();
        let per = per_label_prf(&cm).unwrap();
        assert_eq!((per[2].precision, per[2].recall, per[2].f1), (0.0, 0.0, 0.0));
        assert!(per[2].zero_division);
        assert!(!per[0].zero_division);
        let r = report(&cm, None).unwrap();
        assert_eq!(r.flags.zero_division, vec!["2".to_string()]);
    }

    #[test]
    fn samples_average_counts_matches() {
        let recs: Vec<_> = [(0, 0), (1, 1), (2, 2), (0, 1)]
            .iter()
            .enumerate()
            .map(|(i, &(p, a))| PredictionRecord { sample_id: i as u64, predicted: p, actual: a })
            .collect();
        let s = samples_prf(&recs).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.75, 0.75, 0.75));
        let all: Vec<_> = recs.iter().map(|r| PredictionRecord { predicted: r.actual, ..*r }).collect();
        let s = samples_prf(&all).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn samples_average_rejects_duplicates_and_empty() {
        let r = PredictionRecord { sample_id: 7, predicted: 0, actual: 0 };
        assert!(samples_prf(&[r, r]).is_err());
        assert!(samples_prf(&[]).is_err());
    }

    #[test]
    fn binary_mcc_matches_textbook_formula() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let (tp, fp, fn_, tn): (u64, u64, u64, u64) = (
                rng.random_range(1..50),
                rng.random_range(1..50),
                rng.random_range(1..50),
                rng.random_range(1..50),
            );
            // class 0 = positive; rows predicted, cols actual
            let cm = ConfusionMatrix::from_counts(vec![vec![tp, fp], vec![fn_, tn]]).unwrap();
            let (tp, fp, fn_, tn) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
            let oracle = (tp * tn - fp * fn_) / ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
            assert!(close(mcc_multiclass(&cm).unwrap(), oracle, 1e-12));
        }
    }

    #[test]
    fn degenerate_mcc_is_undefined_and_flagged() {
        let cm = ConfusionMatrix::from_counts(vec![vec![5, 0], vec![0, 0]]).unwrap();
        assert!(matches!(mcc_multiclass(&cm), Err(Error::UndefinedMetric(_))));
        let r = report(&cm, None).unwrap();
        assert_eq!(r.mcc, 0.0);
        assert!(r.flags.mcc_undefined);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let cm = reference_matrix();
        let text = cm.to_csv();
        assert!(text.starts_with("# rows=predicted cols=actual\n0,1,2,3,4,5,6,7\n46,8,0"));
        assert_eq!(ConfusionMatrix::parse_csv(&text, Path::new("x")).unwrap(), cm);

        let bad = "# rows=predicted cols=actual\na,b\n1,2\n3,x\n";
        match ConfusionMatrix::parse_csv(bad, Path::new("bad.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let short = "# rows=predicted cols=actual\na,b\n1,2\n";
        assert!(matches!(ConfusionMatrix::parse_csv(short, Path::new("s")), Err(Error::Parse { line: 4, .. })));
        let ragged = "# rows=predicted cols=actual\na,b\n1,2,3\n4,5\n";
        assert!(matches!(ConfusionMatrix::parse_csv(ragged, Path::new("r")), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(
            ConfusionMatrix::parse_csv("a,b\n1,2\n", Path::new("h")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn report_json_uses_documented_keys() {
        let r = report(&reference_matrix(), Some(&records_from_confusion(&reference_matrix()))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["per_label", "micro", "macro", "weighted", "samples", "accuracy", "mcc"] {
            assert!(v.get(key).is_some(), "missing key {key}");
        }
        assert_eq!(MetricsReport::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn averaging_parses() {
        assert_eq!("weighted".parse::<Averaging>().unwrap(), Averaging::Weighted);
        assert!("median".parse::<Averaging>().is_err());
    }
}
