//! Accuracy, per-class and macro F1, confusion matrices, lenient (two-class)
//! scoring and cross-validation aggregation.
//!
//! Zero-division convention: precision (recall) is 0 when its denominator is
//! 0, and F1 is 0 when precision + recall is 0. Macro-F1 always averages over
//! every class of the schema, present or not.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

/// Square count matrix, rows = gold class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_indices(classes: Vec<String>, gold: &[usize], pred: &[usize]) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::DimensionMismatch {
                expected: gold.len(),
                actual: pred.len(),
            });
        }
        if gold.is_empty() {
            return Err(Error::InvalidArgument("no samples to score".into()));
        }
        let n = classes.len();
        let mut counts = vec![vec![0; n]; n];
        for (&g, &p) in gold.iter().zip(pred) {
            if g >= n || p >= n {
                return Err(Error::InvalidArgument(format!(
                    "class index out of range ({g}, {p})"
                )));
            }
            counts[g][p] += 1;
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<usize>>) -> Result<Self> {
        let n = classes.len();
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument(
                "confusion matrix must be square".into(),
            ));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn off_diagonal(&self) -> usize {
        self.total() - self.trace()
    }

    pub fn row_sum(&self, gold: usize) -> usize {
        self.counts[gold].iter().sum()
    }

    pub fn column_sum(&self, pred: usize) -> usize {
        self.counts.iter().map(|r| r[pred]).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("gold\\pred");
        for c in &self.classes {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            out.push_str(c);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Fixed-width text grid.
    pub fn render(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(String::len)
            .chain(self.counts.iter().flatten().map(|v| v.to_string().len()))
            .max()
            .unwrap_or(1)
            .max("gold \\ pred".len());
        let mut out = format!("{:>width$}", "gold \\ pred");
        for c in &self.classes {
            let _ = write!(out, " | {c:>width$}");
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            let _ = write!(out, "{c:>width$}");
            for v in row {
                let _ = write!(out, " | {v:>width$}");
            }
            out.push('\n');
        }
        out
    }
}

fn label_names() -> Vec<String> {
    Label::ALL.iter().map(|l| l.as_str().to_string()).collect()
}

pub fn confusion_matrix(gold: &[Label], pred: &[Label]) -> Result<ConfusionMatrix> {
    let g: Vec<usize> = gold.iter().map(|l| l.index()).collect();
    let p: Vec<usize> = pred.iter().map(|l| l.index()).collect();
    ConfusionMatrix::from_indices(label_names(), &g, &p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

pub fn per_class_scores(cm: &ConfusionMatrix) -> Vec<ClassScores> {
    (0..cm.num_classes())
        .map(|c| {
            let tp = cm.counts[c][c] as f64;
            let pred = cm.column_sum(c) as f64;
            let gold = cm.row_sum(c) as f64;
            let precision = if pred > 0.0 { tp / pred } else { 0.0 };
            let recall = if gold > 0.0 { tp / gold } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScores {
                precision,
                recall,
                f1,
                support: cm.row_sum(c),
            }
        })
        .collect()
}

pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    let scores = per_class_scores(cm);
    scores.iter().map(|s| s.f1).sum::<f64>() / scores.len() as f64
}

pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    let total = cm.total();
    if total == 0 {
        return 0.0;
    }
    cm.trace() as f64 / total as f64
}

/// Two-class alphabet of lenient scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LenientLabel {
    No = 0,
    Yes = 1,
}

/// Merges *To some extent* into *Yes*.
pub fn lenient_collapse(labels: &[Label]) -> Vec<LenientLabel> {
    labels
        .iter()
        .map(|l| match l {
            Label::No => LenientLabel::No,
            Label::ToSomeExtent | Label::Yes => LenientLabel::Yes,
        })
        .collect()
}

pub fn lenient_confusion_matrix(gold: &[Label], pred: &[Label]) -> Result<ConfusionMatrix> {
    let g: Vec<usize> = lenient_collapse(gold).iter().map(|&l| l as usize).collect();
    let p: Vec<usize> = lenient_collapse(pred).iter().map(|&l| l as usize).collect();
    ConfusionMatrix::from_indices(vec!["No".into(), "Yes".into()], &g, &p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassScores>,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lenient: Option<Box<MetricsReport>>,
}

impl MetricsReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Self {
        let per_class = per_class_scores(&cm);
        let per_class_f1: Vec<f64> = per_class.iter().map(|s| s.f1).collect();
        MetricsReport {
            accuracy: accuracy(&cm),
            macro_f1: per_class_f1.iter().sum::<f64>() / per_class_f1.len() as f64,
            per_class,
            per_class_f1,
            confusion: cm,
            lenient: None,
        }
    }
}

/// Exact three-class report with the lenient two-class report nested.
pub fn evaluate(gold: &[Label], pred: &[Label]) -> Result<MetricsReport> {
    let mut report = MetricsReport::from_confusion(confusion_matrix(gold, pred)?);
    report.lenient = Some(Box::new(MetricsReport::from_confusion(
        lenient_confusion_matrix(gold, pred)?,
    )));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvAggregate {
    pub fold_macro_f1: Vec<f64>,
    /// Mean of the per-fold macro-F1 scores.
    pub mean_fold_macro_f1: f64,
    /// Population standard deviation of the per-fold macro-F1 scores.
    pub std_fold_macro_f1: f64,
    /// Metrics over the concatenation of all folds' validation predictions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled: Option<MetricsReport>,
}

pub fn aggregate_cv(
    per_fold: &[MetricsReport],
    pooled: Option<(&[Label], &[Label])>,
) -> Result<CvAggregate> {
    if per_fold.is_empty() {
        return Err(Error::InvalidArgument(
            "no fold reports to aggregate".into(),
        ));
    }
    let scores: Vec<f64> = per_fold.iter().map(|r| r.macro_f1).collect();
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let pooled = pooled.map(|(g, p)| evaluate(g, p)).transpose()?;
    Ok(CvAggregate {
        fold_macro_f1: scores,
        mean_fold_macro_f1: mean,
        std_fold_macro_f1: var.sqrt(),
        pooled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    #[test]
    fn perfect_predictions() {
        let g = [No, Yes, ToSomeExtent, Yes];
        let cm = confusion_matrix(&g, &g).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(cm.counts[i][j], 0);
                }
            }
        }
        assert_eq!(macro_f1(&cm), 1.0);
        assert_eq!(accuracy(&cm), 1.0);
    }

    #[test]
    fn all_wrong_accuracy_zero() {
        let cm = confusion_matrix(&[No, Yes], &[Yes, No]).unwrap();
        assert_eq!(accuracy(&cm), 0.0);
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(confusion_matrix(&[No], &[No, Yes]).is_err());
        assert!(confusion_matrix(&[], &[]).is_err());
    }

    #[test]
    fn two_class_hand_computed() {
        // A: P=1, R=1/2 -> 2/3; B: P=2/3, R=1 -> 0.8
        let cm = ConfusionMatrix::from_indices(
            vec!["A".into(), "B".into()],
            &[0, 0, 1, 1],
            &[0, 1, 1, 1],
        )
        .unwrap();
        let f = per_class_scores(&cm);
        assert!((f[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((f[1].f1 - 0.8).abs() < 1e-15);
        assert!((macro_f1(&cm) - 0.733_333_333_333_333_3).abs() < 1e-15);
    }

    #[test]
    fn absent_class_counts_as_zero() {
        let cm = confusion_matrix(&[No, Yes, Yes], &[No, Yes, Yes]).unwrap();
        let f = per_class_scores(&cm);
        assert_eq!(f[1].f1, 0.0);
        assert!((macro_f1(&cm) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn track1_yes_row_consistency() {
        // Yes row of the reported track-1 matrix: 54 No, 51 Some, 1827 Yes.
        let mut gold = vec![Yes; 1932];
        let mut pred = vec![No; 54];
        pred.extend(vec![ToSomeExtent; 51]);
        pred.extend(vec![Yes; 1827]);
        gold.truncate(pred.len());
        let cm = confusion_matrix(&gold, &pred).unwrap();
        assert_eq!(cm.counts[2], vec![54, 51, 1827]);
        assert_eq!(cm.row_sum(Yes.index()), 1932);
    }

    #[test]
    fn lenient_collapse_maps() {
        assert_eq!(
            lenient_collapse(&[Yes, ToSomeExtent, No]),
            vec![LenientLabel::Yes, LenientLabel::Yes, LenientLabel::No]
        );
        assert_eq!(lenient_collapse(&[No, No]), vec![LenientLabel::No; 2]);
    }

    #[test]
    fn evaluate_nests_lenient() {
        let r = evaluate(&[Yes, ToSomeExtent, No], &[ToSomeExtent, Yes, No]).unwrap();
        assert!((r.accuracy - 1.0 / 3.0).abs() < 1e-15);
        let l = r.lenient.unwrap();
        assert_eq!(l.accuracy, 1.0);
        assert_eq!(l.confusion.num_classes(), 2);
    }

    #[test]
    fn aggregate_two_folds() {
        let mk = |f1: f64| MetricsReport {
            macro_f1: f1,
            ..MetricsReport::from_confusion(confusion_matrix(&[No], &[No]).unwrap())
        };
        let a = aggregate_cv(&[mk(0.6), mk(0.8)], None).unwrap();
        assert!((a.mean_fold_macro_f1 - 0.7).abs() < 1e-15);
        assert!((a.std_fold_macro_f1 - 0.1).abs() < 1e-15);
        let same = aggregate_cv(&[mk(0.5), mk(0.5), mk(0.5)], None).unwrap();
        assert_eq!(same.mean_fold_macro_f1, 0.5);
        assert_eq!(same.std_fold_macro_f1, 0.0);
        assert!(aggregate_cv(&[], None).is_err());
    }

    #[test]
    fn pooled_matches_direct_run() {
        let g = [No, Yes, Yes, ToSomeExtent, No];
        let p = [No, Yes, ToSomeExtent, ToSomeExtent, Yes];
        let folds = [
            evaluate(&g[..2], &p[..2]).unwrap(),
            evaluate(&g[2..], &p[2..]).unwrap(),
        ];
        let a = aggregate_cv(&folds, Some((&g, &p))).unwrap();
        assert_eq!(a.pooled.unwrap(), evaluate(&g, &p).unwrap());
    }

    #[test]
    fn text_renderings() {
        let cm = confusion_matrix(&[No, Yes], &[No, ToSomeExtent]).unwrap();
        let csv = cm.to_csv();
        assert_eq!(
            csv.lines().next().unwrap(),
            "gold\\pred,No,To some extent,Yes"
        );
        assert_eq!(csv.lines().nth(3).unwrap(), "Yes,0,1,0");
        assert_eq!(cm.render().lines().count(), 4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn labels(n: usize) -> impl Strategy<Value = Vec<Label>> {
            prop::collection::vec((0usize..3).prop_map(|i| Label::ALL[i]), n)
        }

        proptest! {
            #[test]
            fn lenient_accuracy_dominates(pairs in (1usize..60).prop_flat_map(|n| (labels(n), labels(n)))) {
                let (g, p) = pairs;
                let r = evaluate(&g, &p).unwrap();
                prop_assert!(r.lenient.unwrap().accuracy >= r.accuracy);
            }

            #[test]
            fn permutation_equivariance(
                pairs in (1usize..60).prop_flat_map(|n| (labels(n), labels(n))),
                perm in Just([0usize, 1, 2]).prop_shuffle(),
            ) {
                let (g, p) = pairs;
                let map = |v: &[Label]| -> Vec<Label> { v.iter().map(|l| Label::ALL[perm[l.index()]]).collect() };
                let a = evaluate(&g, &p).unwrap();
                let b = evaluate(&map(&g), &map(&p)).unwrap();
                prop_assert!((a.accuracy - b.accuracy).abs() < 1e-15);
                prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
            }

            #[test]
            fn row_sums_are_gold_counts(pairs in (1usize..60).prop_flat_map(|n| (labels(n), labels(n)))) {
                let (g, p) = pairs;
                let cm = confusion_matrix(&g, &p).unwrap();
                for l in Label::ALL {
                    prop_assert_eq!(cm.row_sum(l.index()), g.iter().filter(|x| **x == l).count());
                }
                prop_assert_eq!(cm.total(), g.len());
            }
        }
    }
}
