//! Pure evaluation metrics.

use crate::error::{Error, Result};

fn check_pair(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Domain("metric over an empty prediction set".into()));
    }
    if pred.len() != target.len() {
        return Err(Error::dim("metric", &[pred.len()], &[target.len()]));
    }
    Ok(())
}

/// `√(Σ (p − t)² / N)`.
pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    let se: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((se / pred.len() as f64).sqrt())
}

/// `Σ |p − t| / N`.
pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    let ae: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum();
    Ok(ae / pred.len() as f64)
}

/// 1-based rank of candidate `pos` when candidates are ordered by descending
/// score, ties broken by ascending item id.
pub fn target_rank(scores: &[f64], items: &[usize], pos: usize) -> usize {
    let (s, id) = (scores[pos], items[pos]);
    1 + scores
        .iter()
        .zip(items)
        .enumerate()
        .filter(|&(j, (&sj, &ij))| j != pos && (sj > s || (sj == s && ij < id)))
        .count()
}

fn check_ranks(ranks: &[usize], k: usize) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::Domain("ranking metric over zero events".into()));
    }
    if k == 0 || ranks.contains(&0) {
        return Err(Error::Domain("ranks and K are 1-based".into()));
    }
    Ok(())
}

/// Mean of `1 / rank` over events whose rank is at most `k` (others count 0).
pub fn mrr_at(ranks: &[usize], k: usize) -> Result<f64> {
    check_ranks(ranks, k)?;
    let s: f64 = ranks
        .iter()
        .filter(|&&r| r <= k)
        .map(|&r| 1.0 / r as f64)
        .sum();
    Ok(s / ranks.len() as f64)
}

/// NDCG@K with a single relevant item: mean of `1 / log₂(rank + 1)`.
pub fn ndcg_at(ranks: &[usize], k: usize) -> Result<f64> {
    check_ranks(ranks, k)?;
    let s: f64 = ranks
        .iter()
        .filter(|&&r| r <= k)
        .map(|&r| 1.0 / (r as f64 + 1.0).log2())
        .sum();
    Ok(s / ranks.len() as f64)
}
