//! Small descriptive-statistics helpers shared by the codec, the sampler and
//! the evaluation crate.

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

/// Sample skewness (Fisher-Pearson, uncorrected). Zero for constant input.
pub fn skewness(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    if m2 <= 0.0 {
        return 0.0;
    }
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Linear-interpolation quantile of already sorted data, `q` in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn distinct_count(xs: &[f64]) -> usize {
    let s = sorted(xs);
    let mut n = 0;
    for (i, x) in s.iter().enumerate() {
        if i == 0 || *x != s[i - 1] {
            n += 1;
        }
    }
    n
}

/// Interior cut points splitting `xs` into `bins` equal-mass quantile bins.
/// Duplicate cut points are collapsed, so fewer bins may result.
pub fn quantile_cuts(xs: &[f64], bins: usize) -> Vec<f64> {
    let s = sorted(xs);
    let mut cuts: Vec<f64> = (1..bins)
        .map(|i| quantile_sorted(&s, i as f64 / bins as f64))
        .collect();
    cuts.dedup();
    cuts
}

/// Bin index of `v` given interior cut points: bin i holds `cuts[i-1] < v <= cuts[i]`.
pub fn bin_of(cuts: &[f64], v: f64) -> usize {
    cuts.partition_point(|&c| c < v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_and_bins() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile_sorted(&xs, 0.5), 5.5);
        let cuts = quantile_cuts(&xs, 2);
        assert_eq!(cuts, vec![5.5]);
        assert_eq!(bin_of(&cuts, 5.0), 0);
        assert_eq!(bin_of(&cuts, 6.0), 1);
    }

    #[test]
    fn skewness_of_symmetric_data_is_zero() {
        assert!(skewness(&[1.0, 2.0, 3.0]).abs() < 1e-12);
        assert!(skewness(&[1.0, 1.0, 1.0, 10.0]) > 1.0);
        assert_eq!(skewness(&[2.0, 2.0]), 0.0);
    }
}
