use super::tensor::Tensor;
use crate::error::{DsfError, Result};

/// Row-wise softmax of a batch × L tensor.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (b, l) = logits.dims2()?;
    let mut out = logits.data().to_vec();
    for i in 0..b {
        let row = &mut out[i * l..(i + 1) * l];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Tensor::from_vec(&[b, l], out)
}

/// Class-weighted cross-entropy, averaged over the batch.
///
/// Returns the loss and its gradient with respect to the logits.
pub fn softmax_xent(logits: &Tensor, labels: &[usize], class_weights: &[f64]) -> Result<(f64, Tensor)> {
    let (b, l) = logits.dims2()?;
    if labels.len() != b {
        return Err(DsfError::Shape(format!("{} labels for batch of {b}", labels.len())));
    }
    if class_weights.len() != l {
        return Err(DsfError::Shape(format!("{} class weights for {l} classes", class_weights.len())));
    }
    if !logits.is_finite() {
        return Err(DsfError::InvalidInput("non-finite logits".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= l) {
        return Err(DsfError::InvalidInput(format!("label {bad} out of range for {l} classes")));
    }
    let probs = softmax(logits)?;
    let p = probs.data();
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; b * l];
    for (i, &y) in labels.iter().enumerate() {
        let w = class_weights[y];
        let row = &logits.data()[i * l..(i + 1) * l];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += w * (lse - row[y]);
        for k in 0..l {
            let target = if k == y { 1.0 } else { 0.0 };
            grad[i * l + k] = w * (p[i * l + k] - target) * inv_b;
        }
    }
    Ok((loss * inv_b, Tensor::from_vec(&[b, l], grad)?))
}
