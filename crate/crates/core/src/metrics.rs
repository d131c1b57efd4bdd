//! Evaluation metrics.

use crate::error::{Error, Result};

fn masked(labels: &[i64], preds: &[usize], mask: &[usize]) -> Result<Vec<(usize, i64)>> {
    if mask.is_empty() {
        return Err(Error::UndefinedMetric("empty mask".into()));
    }
    mask.iter()
        .map(|&i| match (preds.get(i), labels.get(i)) {
            (Some(&p), Some(&l)) => Ok((p, l)),
            _ => Err(Error::Contract(format!("mask index {i} out of range"))),
        })
        .collect()
}

pub fn accuracy(preds: &[usize], labels: &[i64], mask: &[usize]) -> Result<f64> {
    let pairs = masked(labels, preds, mask)?;
    let hits = pairs.iter().filter(|(p, l)| *l >= 0 && *p as i64 == *l).count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// F1 of class 1 against class 0.
pub fn f1_binary(preds: &[usize], labels: &[i64], mask: &[usize]) -> Result<f64> {
    let pairs = masked(labels, preds, mask)?;
    let positives = pairs.iter().filter(|(_, l)| *l == 1).count();
    if positives == 0 || positives == pairs.len() {
        return Err(Error::UndefinedMetric("f1 needs both classes in the mask".into()));
    }
    let tp = pairs.iter().filter(|(p, l)| *p == 1 && *l == 1).count() as f64;
    let fp = pairs.iter().filter(|(p, l)| *p == 1 && *l != 1).count() as f64;
    let fn_ = pairs.iter().filter(|(p, l)| *p != 1 && *l == 1).count() as f64;
    if tp == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp / (2.0 * tp + fp + fn_))
}

/// Area under the ROC curve via average ranks; ties count one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("roc_auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
