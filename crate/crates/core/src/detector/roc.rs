use crate::error::{Error, Result};

/// Area under the ROC curve with label 1 as the positive class and higher
/// scores meaning "more positive". Equal scores are stepped over together,
/// so ties count one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<(f64, Vec<(f64, f64)>)> {
    if scores.len() != labels.len() {
        return Err(Error::domain("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::domain("scores contain NaN"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::domain("ROC needs both labels present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut curve = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        auc += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        curve.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok((auc / (pos as f64 * neg as f64), curve))
}

/// Threshold maximizing TPR - FPR when "normal" means `score >= threshold`.
/// Candidates sit halfway between consecutive distinct scores, plus one
/// below the minimum and one above the maximum.
pub fn youden_threshold(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (_, _) = roc_auc(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let max = scores[order[0]];
    let min = scores[order[order.len() - 1]];
    let mut best = (0.0, max + 1.0);
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let next = if i < order.len() { scores[order[i]] } else { min - 1.0 };
        let j = tp / pos - fp / neg;
        if j > best.0 {
            best = (j, (s + next) / 2.0);
        }
    }
    Ok(best.1)
}

/// Smallest threshold at which at most `fpr` of the given normal scores fall
/// strictly below it.
pub fn threshold_at_fpr(normal_scores: &[f64], fpr: f64) -> Result<f64> {
    if normal_scores.is_empty() {
        return Err(Error::domain("no normal scores"));
    }
    if !(0.0..1.0).contains(&fpr) {
        return Err(Error::domain("false-positive rate must lie in [0, 1)"));
    }
    let mut s = normal_scores.to_vec();
    s.sort_by(f64::total_cmp);
    let k = (fpr * s.len() as f64).floor() as usize;
    Ok(s[k])
}
