//! Classification metrics.

use std::collections::BTreeSet;

pub fn accuracy(truth: &[usize], pred: &[usize]) -> f64 {
    assert_eq!(truth.len(), pred.len());
    let hits = truth.iter().zip(pred).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

/// Per-class F1 averaged with weights proportional to true support.
pub fn weighted_f1(truth: &[usize], pred: &[usize]) -> f64 {
    assert_eq!(truth.len(), pred.len());
    let classes: BTreeSet<usize> = truth.iter().copied().collect();
    let n = truth.len() as f64;
    classes
        .into_iter()
        .map(|c| {
            let tp = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p == c).count() as f64;
            let fp = truth.iter().zip(pred).filter(|(t, p)| **t != c && **p == c).count() as f64;
            let fneg = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p != c).count() as f64;
            let support = tp + fneg;
            let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fneg) };
            f1 * support / n
        })
        .sum()
}

/// Area under the ROC curve from positive-class scores, with tied scores
/// sharing their average rank. Returns `None` when one class is absent.
pub fn roc_auc(positive: &[bool], score: &[f64]) -> Option<f64> {
    assert_eq!(positive.len(), score.len());
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && score[order[j + 1]] == score[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if positive[k] {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Binary AUC on class-1 probability, or the macro one-vs-rest average
/// over classes that have both positives and negatives in `truth`.
pub fn roc_auc_ovr(truth: &[usize], proba: &[Vec<f64>]) -> f64 {
    let k = proba.first().map_or(0, Vec::len);
    if k == 2 {
        let pos: Vec<bool> = truth.iter().map(|&t| t == 1).collect();
        let s: Vec<f64> = proba.iter().map(|p| p[1]).collect();
        return roc_auc(&pos, &s).unwrap_or(0.5);
    }
    let aucs: Vec<f64> = (0..k)
        .filter_map(|c| {
            let pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
            let s: Vec<f64> = proba.iter().map(|p| p[c]).collect();
            roc_auc(&pos, &s)
        })
        .collect();
    if aucs.is_empty() {
        0.5
    } else {
        aucs.iter().sum::<f64>() / aucs.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_perfect_reversed_and_tied() {
        let pos = [false, false, true, true];
        assert_eq!(roc_auc(&pos, &[0.1, 0.2, 0.8, 0.9]), Some(1.0));
        assert_eq!(roc_auc(&pos, &[0.9, 0.8, 0.2, 0.1]), Some(0.0));
        assert_eq!(roc_auc(&pos, &[0.5; 4]), Some(0.5));
        assert_eq!(roc_auc(&[true, true], &[0.1, 0.2]), None);
    }

    #[test]
    fn auc_matches_pair_count() {
        // pairs (pos, neg): 3 pos x 2 neg, count pos > neg plus half ties
        let pos = [true, false, true, false, true];
        let s = [0.3, 0.3, 0.9, 0.5, 0.1];
        let mut wins = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                if pos[i] && !pos[j] {
                    wins += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((roc_auc(&pos, &s).unwrap() - wins / 6.0).abs() < 1e-15);
    }

    #[test]
    fn f1_and_accuracy() {
        let t = [0, 0, 1, 1, 1];
        let p = [0, 1, 1, 1, 0];
        assert_eq!(accuracy(&t, &p), 0.6);
        // class 0: tp1 fp1 fn1 -> 0.5; class 1: tp2 fp1 fn1 -> 2/3
        let want = 0.5 * 0.4 + (2.0 / 3.0) * 0.6;
        assert!((weighted_f1(&t, &p) - want).abs() < 1e-15);
    }
}
