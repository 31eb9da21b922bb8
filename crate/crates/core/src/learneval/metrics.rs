//! Confusion counts, recall / 1 - precision / classification rate, and ROC analysis.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(predicted: &[i8], truth: &[i8]) -> Result<Self> {
        ensure!(
            predicted.len() == truth.len(),
            Argument,
            "{} predictions but {} labels",
            predicted.len(),
            truth.len()
        );
        let mut c = Self::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p > 0, t > 0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Which count divides the false positives in `1 - precision`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionDenominator {
    /// `tp + fp`, the usual precision complement.
    #[default]
    PredictedPositives,
    /// `tp + fn`.
    ActualPositives,
}

/// Rates in `[0, 1]`; `None` when the denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: Option<f64>,
    pub one_minus_precision: Option<f64>,
    pub classification_rate: Option<f64>,
    pub precision_denominator: PrecisionDenominator,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    metrics_with(c, PrecisionDenominator::PredictedPositives)
}

pub fn metrics_with(c: &ConfusionCounts, denominator: PrecisionDenominator) -> Metrics {
    let omp_den = match denominator {
        PrecisionDenominator::PredictedPositives => c.tp + c.fp,
        PrecisionDenominator::ActualPositives => c.tp + c.fn_,
    };
    Metrics {
        recall: ratio(c.tp, c.tp + c.fn_),
        // fp over actual positives can exceed 1; clamp keeps the variant a rate.
        one_minus_precision: ratio(c.fp, omp_den).map(|v| v.min(1.0)),
        classification_rate: ratio(c.tp + c.tn, c.total()),
        precision_denominator: denominator,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    /// `(false positive rate, true positive rate)`, from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    /// True positive rate where `TPR = 1 - FPR`.
    pub eer_detection_rate: f64,
}

/// Trapezoidal area under a polyline.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Sweeps every distinct score as a threshold, highest first; tied scores
/// move together.
pub fn roc(scores: &[f64], labels: &[i8]) -> Result<RocSummary> {
    ensure!(
        scores.len() == labels.len(),
        Argument,
        "{} scores but {} labels",
        scores.len(),
        labels.len()
    );
    ensure!(
        scores.iter().all(|s| !s.is_nan()),
        Argument,
        "ROC scores must not be NaN"
    );
    let p = labels.iter().filter(|&&l| l > 0).count();
    let n = labels.len() - p;
    ensure!(
        p > 0 && n > 0,
        Argument,
        "ROC needs both classes ({p} positive, {n} negative)"
    );
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] > 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    let auc = trapezoid(&points);

    // g = TPR - (1 - FPR) rises from -1 to 1 along the curve.
    let g = |q: (f64, f64)| q.1 + q.0 - 1.0;
    let k = points
        .iter()
        .position(|&q| g(q) >= 0.0)
        .expect("the curve ends at (1, 1)");
    let eer_detection_rate = if g(points[k]) == 0.0 {
        points[k].1
    } else {
        let (a, b) = (points[k - 1], points[k]);
        let t = -g(a) / (g(b) - g(a));
        a.1 + t * (b.1 - a.1)
    };
    Ok(RocSummary {
        points,
        auc,
        eer_detection_rate,
    })
}
