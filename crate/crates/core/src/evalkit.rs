//! Confusion matrices, per-class precision/recall/F1 and the interesting/uninteresting projection.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::QualityClass;

/// Square count matrix: rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    size: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(size: usize) -> Self {
        ConfusionMatrix {
            size,
            counts: vec![0; size * size],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::InvalidParameter("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            size,
            counts: rows.concat(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.size + predicted]
    }

    pub fn add(&mut self, truth: usize, predicted: usize, n: u64) {
        self.counts[truth * self.size + predicted] += n;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.size..(truth + 1) * self.size]
    }

    /// Share of pairs on the diagonal; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..self.size).map(|i| self.get(i, i)).sum::<u64>() as f64 / total as f64
    }

    /// Applies `map` to both axes, merging cells that land together.
    pub fn project(&self, size: usize, map: impl Fn(usize) -> usize) -> ConfusionMatrix {
        let mut out = ConfusionMatrix::new(size);
        for t in 0..self.size {
            for p in 0..self.size {
                out.add(map(t), map(p), self.get(t, p));
            }
        }
        out
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.size != self.size {
            return Err(Error::InvalidParameter("confusion matrix sizes differ".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Multi-class confusion matrix over the five quality classes.
pub fn confusion(predicted: &[QualityClass], truth: &[QualityClass]) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch(predicted.len(), truth.len()));
    }
    let mut cm = ConfusionMatrix::new(QualityClass::ALL.len());
    for (p, t) in predicted.iter().zip(truth) {
        cm.add(t.index(), p.index(), 1);
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interest {
    Uninteresting = 0,
    Interesting = 1,
}

/// Classes 3 and 4 are interesting, 0 to 2 are not.
pub fn binarize(c: QualityClass) -> Interest {
    if c >= QualityClass::Good {
        Interest::Interesting
    } else {
        Interest::Uninteresting
    }
}

/// 2x2 matrix computed directly from binarized labels. Index 1 is "interesting".
pub fn binary_confusion(
    predicted: &[QualityClass],
    truth: &[QualityClass],
) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch(predicted.len(), truth.len()));
    }
    let mut cm = ConfusionMatrix::new(2);
    for (p, t) in predicted.iter().zip(truth) {
        cm.add(binarize(*t) as usize, binarize(*p) as usize, 1);
    }
    Ok(cm)
}

/// Aggregates a 5x5 matrix through [`binarize`].
pub fn aggregate_binary(cm: &ConfusionMatrix) -> ConfusionMatrix {
    cm.project(2, |c| {
        binarize(QualityClass::from_index(c).expect("five-class matrix")) as usize
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when no pair was predicted as this class (precision reported as 0).
    pub precision_defined: bool,
    /// False when no pair truly belongs to this class (recall reported as 0).
    pub recall_defined: bool,
    pub support: u64,
}

pub fn metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.size())
        .map(|c| {
            let tp = cm.get(c, c);
            let predicted: u64 = (0..cm.size()).map(|t| cm.get(t, c)).sum();
            let actual: u64 = cm.row(c).iter().sum();
            let ratio = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                precision_defined: predicted > 0,
                recall_defined: actual > 0,
                support: actual,
            }
        })
        .collect()
}

/// Plain-text report with both matrices and their metric tables.
pub fn render_report(cm: &ConfusionMatrix) -> String {
    let mut out = String::new();
    render_section(&mut out, "multi-class", cm, &["0", "1", "2", "3", "4"]);
    let binary = aggregate_binary(cm);
    out.push('\n');
    render_section(&mut out, "binary", &binary, &["uninteresting", "interesting"]);
    out
}

fn render_section(out: &mut String, title: &str, cm: &ConfusionMatrix, labels: &[&str]) {
    let w = labels.iter().map(|l| l.len()).max().unwrap_or(1).max(8);
    let _ = writeln!(out, "# {title} confusion matrix (rows: true, columns: predicted)");
    let _ = write!(out, "{:>w$}", "");
    for l in labels {
        let _ = write!(out, " {l:>w$}");
    }
    out.push('\n');
    for (t, l) in labels.iter().enumerate() {
        let _ = write!(out, "{l:>w$}");
        for p in 0..cm.size() {
            let _ = write!(out, " {:>w$}", cm.get(t, p));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "accuracy {:.4}", cm.accuracy());
    let _ = writeln!(
        out,
        "{:>w$} {:>9} {:>9} {:>9} {:>9}",
        "class", "precision", "recall", "f1", "support"
    );
    for (l, m) in labels.iter().zip(metrics(cm)) {
        let flag = |defined: bool| if defined { ' ' } else { '*' };
        let _ = writeln!(
            out,
            "{l:>w$} {:>8.4}{} {:>8.4}{} {:>9.4} {:>9}",
            m.precision,
            flag(m.precision_defined),
            m.recall,
            flag(m.recall_defined),
            m.f1,
            m.support
        );
    }
    let _ = writeln!(out, "(* undefined, reported as 0)");
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use QualityClass::*;

    #[test]
    fn perfect_predictor_is_diagonal() {
        let labels = [None, Poor, Moderate, Good, High, High];
        let cm = confusion(&labels, &labels).unwrap();
        assert_eq!(cm.get(4, 4), 2);
        assert_eq!(cm.total(), 6);
        assert_eq!(cm.accuracy(), 1.0);
        assert!(metrics(&cm).iter().all(|m| m.precision == 1.0 && m.recall == 1.0 && m.f1 == 1.0));
    }

    #[test]
    fn single_pair_lands_in_one_cell() {
        let cm = confusion(&[Good], &[High]).unwrap();
        assert_eq!(cm.get(4, 3), 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert_eq!(confusion(&[], &[]).unwrap().total(), 0);
        assert!(matches!(confusion(&[Good], &[]), Err(Error::LengthMismatch(1, 0))));
    }

    #[test]
    fn undefined_precision_is_flagged() {
        let cm = confusion(&[None, None], &[None, High]).unwrap();
        let m = metrics(&cm);
        assert!(!m[4].precision_defined);
        assert_eq!(m[4].precision, 0.0);
        assert!(m[4].recall_defined);
        assert!(!m[2].recall_defined);
    }

    #[test]
    fn binary_metrics_from_reference_counts() {
        // rows: true uninteresting / interesting
        let cm = ConfusionMatrix::from_rows(&[vec![419_119, 129], vec![166, 915]]).unwrap();
        let m = metrics(&cm)[1];
        assert!((m.precision - 0.8764).abs() < 1e-4);
        assert!((m.recall - 0.8464).abs() < 1e-4);
        assert!((m.f1 - 0.8611).abs() < 1e-4);
    }

    #[test]
    fn binarize_mapping() {
        assert_eq!(binarize(High), Interest::Interesting);
        assert_eq!(binarize(Good), Interest::Interesting);
        assert_eq!(binarize(Moderate), Interest::Uninteresting);
        assert_eq!(binarize(None), Interest::Uninteresting);
    }

    #[test]
    fn report_mentions_both_views() {
        let r = render_report(&confusion(&[High, None], &[High, Poor]).unwrap());
        assert!(r.contains("multi-class") && r.contains("interesting"));
    }

    fn class() -> impl Strategy<Value = QualityClass> {
        (0usize..5).prop_map(|i| QualityClass::from_index(i).unwrap())
    }

    proptest! {
        #[test]
        fn aggregated_equals_direct(pairs in prop::collection::vec((class(), class()), 0..200)) {
            let (p, t): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let cm = confusion(&p, &t).unwrap();
            prop_assert_eq!(aggregate_binary(&cm), binary_confusion(&p, &t).unwrap());
        }

        #[test]
        fn accuracy_invariant_under_relabeling(
            pairs in prop::collection::vec((class(), class()), 1..200),
            perm in Just([0usize, 1, 2, 3, 4]).prop_shuffle(),
        ) {
            let (p, t): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let cm = confusion(&p, &t).unwrap();
            let relabeled = cm.project(5, |c| perm[c]);
            prop_assert_eq!(cm.accuracy(), relabeled.accuracy());
        }
    }
}
