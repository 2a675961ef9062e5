//! Ranking and classification metrics.

use alloc::vec::Vec;

#[allow(unused_imports)] // inherent methods shadow it when std is linked
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("AUC-ROC needs both classes, got {positives} positives and {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },
    #[error("AUC-PR needs at least one positive")]
    NoPositives,
    #[error("length mismatch: {0} scores vs {1} labels")]
    Length(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("score {0} is not finite")]
    NonFinite(usize),
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::Length(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(MetricError::Empty);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    Ok(())
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from midranks in `O(n log n)`.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass { positives: pos, negatives: neg });
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
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += mid * tied_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: mean over positives of the precision at that
/// positive's rank. Ranking is by descending score, ties broken by input
/// index.
pub fn auc_pr(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &k) in order.iter().enumerate() {
        if labels[k] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / pos as f64)
}

/// Pooled true-positive / false-positive / false-negative counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MicroCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MicroCounts {
    /// Counts over per-example class sets (sorted or not).
    pub fn from_sets(pred: &[Vec<u32>], truth: &[Vec<u32>]) -> Result<Self, MetricError> {
        if pred.len() != truth.len() {
            return Err(MetricError::Length(pred.len(), truth.len()));
        }
        if pred.is_empty() {
            return Err(MetricError::Empty);
        }
        let mut c = MicroCounts::default();
        for (p, t) in pred.iter().zip(truth) {
            let hit = p.iter().filter(|x| t.contains(x)).count();
            c.tp += hit;
            c.fp += p.len() - hit;
            c.fn_ += t.len() - hit;
        }
        Ok(c)
    }

    /// `0` when there is nothing to score.
    pub fn f1(&self) -> f64 {
        let d = 2 * self.tp + self.fp + self.fn_;
        if d == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / d as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let d = self.tp + self.fn_;
        if d == 0 {
            0.0
        } else {
            self.tp as f64 / d as f64
        }
    }
}

fn singletons(v: &[u32]) -> Vec<Vec<u32>> {
    v.iter().map(|&c| alloc::vec![c]).collect()
}

/// Micro-F1 of single-label predictions. Each miss is one false positive and
/// one false negative, so this equals accuracy.
pub fn micro_f1(pred: &[u32], truth: &[u32]) -> Result<f64, MetricError> {
    Ok(MicroCounts::from_sets(&singletons(pred), &singletons(truth))?.f1())
}

/// Micro-recall of single-label predictions; also equals accuracy.
pub fn micro_recall(pred: &[u32], truth: &[u32]) -> Result<f64, MetricError> {
    Ok(MicroCounts::from_sets(&singletons(pred), &singletons(truth))?.recall())
}

/// Mean and population standard deviation. `(0, 0)` for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
