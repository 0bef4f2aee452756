use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Mean squared error over a single-column prediction.
///
/// Returns `(1/N)·Σ(y-ŷ)²` and its gradient `(2/N)·(ŷ-y)` with respect to `pred`.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() || pred.cols() != 1 {
        return Err(Error::shape(format!(
            "mse needs equal single-column inputs, got {}x{} and {}x{}",
            pred.rows(),
            pred.cols(),
            target.rows(),
            target.cols()
        )));
    }
    let n = pred.rows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let nf = n as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, 1);
    for i in 0..n {
        let d = pred.get(i, 0) - target.get(i, 0);
        loss += d * d;
        grad.set(i, 0, 2.0 * d / nf);
    }
    Ok((loss / nf, grad))
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Softmax cross-entropy averaged over the batch.
///
/// Returns the loss in nats and its gradient `(softmax - onehot)/N` with
/// respect to `logits`.
pub fn cross_entropy_loss(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, k) = logits.shape();
    if labels.len() != n {
        return Err(Error::shape(format!(
            "{} labels for {n} logit rows",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::invalid(format!("label {bad} out of range for {k} classes")));
    }
    let nf = n as f64;
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        loss += log_sum - row[label];
        let g = grad.row_mut(r);
        g[label] -= 1.0;
        g.iter_mut().for_each(|v| *v /= nf);
    }
    Ok((loss / nf, grad))
}

/// Fraction of rows whose arg-max logit equals the label.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(r, &l)| {
            let row = logits.row(r);
            let best = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
                .0;
            best == l
        })
        .count();
    hits as f64 / labels.len() as f64
}
