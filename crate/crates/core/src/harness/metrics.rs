use crate::error::{Error, Result};

/// Area under the ROC curve as the rank statistic
/// `P(pos > neg) + ½·P(pos = neg)`, from one sort of all scores.
///
/// The statistic is accumulated in integers (twice the pair count), so the
/// result is exactly the pair-counting value.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Contract(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    if pos.iter().chain(neg).any(|x| x.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut twice: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut p, mut n) = (0u128, 0u128);
        // -0.0 and 0.0 sort apart under total_cmp but compare equal.
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        twice += p * (2 * neg_below + n);
        neg_below += n;
        i = j;
    }
    Ok(twice as f64 / (2 * pos.len() as u128 * neg.len() as u128) as f64)
}

/// Fraction of logits whose sign agrees with a ±1 label; a logit of exactly
/// zero predicts −1.
pub fn accuracy(logits: &[f64], labels: &[i8]) -> Result<f64> {
    if logits.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} labels",
            logits.len(),
            labels.len()
        )));
    }
    if logits.is_empty() {
        return Err(Error::Contract("accuracy of an empty set".into()));
    }
    let hits = logits
        .iter()
        .zip(labels)
        .filter(|(&z, &y)| (z > 0.0) == (y > 0))
        .count();
    Ok(hits as f64 / logits.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
