use crate::error::{DsfError, Result};

/// Balanced accuracy with the classes that were left out of the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedAccuracy {
    pub value: f64,
    /// Classes that appear only among predictions and have no true examples.
    pub excluded: Vec<usize>,
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Mean over classes of per-class recall.
pub fn balanced_accuracy(preds: &[usize], labels: &[usize]) -> Result<BalancedAccuracy> {
    check(preds, labels)?;
    let n_classes = preds.iter().chain(labels).max().map_or(0, |m| m + 1);
    let mut support = vec![0usize; n_classes];
    let mut hits = vec![0usize; n_classes];
    for (&p, &y) in preds.iter().zip(labels) {
        support[y] += 1;
        if p == y {
            hits[y] += 1;
        }
    }
    let mut excluded = Vec::new();
    let mut sum = 0.0;
    let mut present = 0;
    for k in 0..n_classes {
        if support[k] == 0 {
            excluded.push(k);
            continue;
        }
        sum += hits[k] as f64 / support[k] as f64;
        present += 1;
    }
    Ok(BalancedAccuracy { value: sum / present as f64, excluded })
}

fn check(preds: &[usize], labels: &[usize]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(DsfError::Shape(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(DsfError::InvalidInput("no labels to score".into()));
    }
    Ok(())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Class of a recording from its per-window probabilities: argmax of the mean.
pub fn recording_class(window_probs: &[Vec<f64>]) -> Result<usize> {
    let first = window_probs.first().ok_or_else(|| DsfError::InvalidInput("recording has no windows".into()))?;
    let mut mean = vec![0.0; first.len()];
    for p in window_probs {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    let n = window_probs.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(argmax(&mean))
}
