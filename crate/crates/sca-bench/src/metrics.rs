//! Test-set metrics: mean squared error and the ROC curve with its area.

use thiserror::Error;

#[derive(Error, Debug, PartialEq)]
pub enum MetricError {
    #[error("metric inputs are empty")]
    Empty,
    #[error("prediction/target length mismatch: {predictions} vs {targets}")]
    LengthMismatch { predictions: usize, targets: usize },
    #[error("ROC needs both classes present")]
    SingleClass,
    #[error("labels must be 0 or 1, found {0}")]
    BadLabel(f64),
}

/// Mean of squared differences, in whatever space the inputs live in
/// (normalized target space for the benchmark tables).
pub fn compute_mse(predictions: &[f64], targets: &[f64]) -> Result<f64, MetricError> {
    if predictions.is_empty() {
        return Err(MetricError::Empty);
    }
    if predictions.len() != targets.len() {
        return Err(MetricError::LengthMismatch {
            predictions: predictions.len(),
            targets: targets.len(),
        });
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// ROC curve points `(fpr, tpr)` from `(0,0)` to `(1,1)` over descending
/// score thresholds (tied scores grouped), and the trapezoidal area, which
/// equals the pairwise ranking statistic with half credit for ties.
pub fn compute_roc_auc(
    scores: &[f64],
    labels: &[f64],
) -> Result<(Vec<(f64, f64)>, f64), MetricError> {
    if scores.is_empty() {
        return Err(MetricError::Empty);
    }
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            predictions: scores.len(),
            targets: labels.len(),
        });
    }
    for &y in labels {
        if y != 0.0 && y != 1.0 {
            return Err(MetricError::BadLabel(y));
        }
    }
    let pos = labels.iter().filter(|&&y| y == 1.0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut points = vec![(0.0, 0.0)];
    let mut auc = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_tp, mut prev_fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        // consume the whole tie group at once so ties become one segment
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1.0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = (prev_fp as f64 / neg as f64, prev_tp as f64 / pos as f64);
        let (x1, y1) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
        prev_tp = tp;
        prev_fp = fp;
    }
    Ok((points, auc))
}
