//! Classification metrics.

use crate::util::average_ranks;
use crate::{Error, Result};

/// Area under the ROC curve, computed as the Mann–Whitney pair statistic:
/// the fraction of (positive, negative) pairs whose scores are ordered
/// correctly, with ties counting one half.
///
/// `higher_is_positive` selects the direction: when false, smaller scores
/// indicate the positive class.
pub fn roc_auc(pos: &[f64], neg: &[f64], higher_is_positive: bool) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidArgument(
            "roc_auc needs at least one score in each class".into(),
        ));
    }
    if pos.iter().chain(neg).any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "roc_auc scores must be finite".into(),
        ));
    }
    let sign = if higher_is_positive { 1.0 } else { -1.0 };
    let combined: Vec<f64> = pos.iter().chain(neg).map(|&x| sign * x).collect();
    let ranks = average_ranks(&combined);
    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    let pos_rank_sum: f64 = ranks[..pos.len()].iter().sum();
    Ok((pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}
