use serde::Serialize;

use crate::error::{Error, Result};

/// `counts[t][p]` = samples of true class `t` predicted as `p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) {
            return Err(Error::shape("confusion matrix must be square"));
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    /// Fraction of samples from classes `a` or `b` predicted as their own class.
    pub fn pair_accuracy(&self, a: usize, b: usize) -> f64 {
        let n = self.support(a) + self.support(b);
        if n == 0 {
            return 0.0;
        }
        (self.counts[a][a] + self.counts[b][b]) as f64 / n as f64
    }

    pub fn to_csv(&self) -> String {
        let k = self.classes();
        let mut out = String::from("true\\pred");
        for p in 0..k {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
        for (t, row) in self.counts.iter().enumerate() {
            out.push_str(&t.to_string());
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(k);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(Error::Invalid(format!("label pair ({t}, {p}) out of range for {k} classes")));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    /// `trace / N`.
    pub accuracy: f64,
    /// Mean per-class recall.
    pub balanced_accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class and averaged scores; undefined ratios count as zero.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let k = cm.classes();
    if k < 2 {
        return Err(Error::Invalid(format!("metrics need at least 2 classes, got {k}")));
    }
    let n = cm.total();
    if n == 0 {
        return Err(Error::Invalid("no samples".into()));
    }
    let precision: Vec<f64> = (0..k).map(|c| ratio(cm.counts[c][c], cm.predicted(c))).collect();
    let recall: Vec<f64> = (0..k).map(|c| ratio(cm.counts[c][c], cm.support(c))).collect();
    let f1: Vec<f64> = precision
        .iter()
        .zip(&recall)
        .map(|(p, r)| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
        .collect();
    let weighted_f1 = (0..k).map(|c| cm.support(c) as f64 * f1[c]).sum::<f64>() / n as f64;
    let trace: u64 = (0..k).map(|c| cm.counts[c][c]).sum();
    Ok(MetricsReport {
        macro_f1: f1.iter().sum::<f64>() / k as f64,
        balanced_accuracy: recall.iter().sum::<f64>() / k as f64,
        accuracy: trace as f64 / n as f64,
        weighted_f1,
        precision,
        recall,
        f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_example() {
        let cm = confusion_matrix(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(confusion_matrix(&[], &[], 3).unwrap(), ConfusionMatrix::zeros(3));
        assert!(confusion_matrix(&[0, 3], &[0, 1], 3).is_err());
    }

    #[test]
    fn hand_computed_weighted_f1() {
        let cm = ConfusionMatrix::from_counts(vec![vec![1, 1], vec![0, 2]]).unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert!((m.f1[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1[1] - 0.8).abs() < 1e-15);
        assert!((m.weighted_f1 - 11.0 / 15.0).abs() < 1e-15);
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.balanced_accuracy, 0.75);
    }

    #[test]
    fn diagonal_is_perfect() {
        let cm = ConfusionMatrix::from_counts(vec![vec![3, 0, 0], vec![0, 1, 0], vec![0, 0, 5]]).unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert_eq!((m.weighted_f1, m.macro_f1, m.accuracy, m.balanced_accuracy), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn never_predicted_class_scores_zero() {
        let cm = ConfusionMatrix::from_counts(vec![vec![0, 2], vec![0, 3]]).unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert_eq!(m.f1[0], 0.0);
        assert_eq!(m.precision[0], 0.0);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        let e = compute_metrics(&ConfusionMatrix::zeros(2)).unwrap_err();
        assert!(e.to_string().contains("no samples"));
    }

    #[test]
    fn pair_accuracy_uses_both_supports() {
        let cm = ConfusionMatrix::from_counts(vec![vec![4, 1, 0], vec![2, 3, 0], vec![0, 0, 9]]).unwrap();
        assert_eq!(cm.pair_accuracy(0, 1), 0.7);
    }
}
