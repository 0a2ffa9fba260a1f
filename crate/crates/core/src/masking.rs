//! Mask indicators, hint vectors and the row-selection weight matrix.
//!
//! A mask selects a non-empty subset of components. The number of selected
//! components `k` is drawn with probability proportional to `1/k`, then a
//! uniform `k`-subset is chosen. Training rows are drawn with probability
//! equal to the mean, over the selected components, of each component's
//! log-smoothed inverse-frequency weights.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Matrix;
use crate::codec::{ComponentKind, ComponentLayout, EncodedTable};
use crate::error::{Error, Result};
use crate::stats;

/// Binary vector over components; `true` marks a known component.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskIndicator(pub Vec<bool>);

impl MaskIndicator {
    pub fn zeros(d_m: usize) -> Self {
        Self(vec![false; d_m])
    }

    pub fn ones(d_m: usize) -> Self {
        Self(vec![true; d_m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `‖m‖₁`
    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// The mask expanded over encoded dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMask(pub Vec<f64>);

/// Elementwise product of a data mask with an encoded row.
#[derive(Clone, Debug, PartialEq)]
pub struct HintVector(pub Vec<f64>);

/// Probability of selecting exactly `k` components, for `k = 1..=d_m`.
pub fn mask_size_probs(d_m: usize) -> Vec<f64> {
    let total: f64 = (1..=d_m).map(|i| 1.0 / i as f64).sum();
    (1..=d_m).map(|i| 1.0 / i as f64 / total).collect()
}

pub fn sample_mask<R: Rng + ?Sized>(d_m: usize, rng: &mut R) -> MaskIndicator {
    assert!(d_m >= 1, "layout has no components");
    let probs = mask_size_probs(d_m);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut k = d_m;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            k = i + 1;
            break;
        }
    }
    let mut m = MaskIndicator::zeros(d_m);
    for i in index::sample(rng, d_m, k) {
        m.0[i] = true;
    }
    m
}

pub fn expand_mask(m: &MaskIndicator, layout: &ComponentLayout) -> Result<DataMask> {
    if m.len() != layout.n_components() {
        return Err(Error::DimensionMismatch {
            expected: layout.n_components(),
            found: m.len(),
        });
    }
    let mut mu = vec![0.0; layout.dim()];
    for (c, &on) in layout.components.iter().zip(&m.0) {
        if on {
            mu[c.range()].fill(1.0);
        }
    }
    Ok(DataMask(mu))
}

pub fn make_hint(mu: &DataMask, x: &[f64]) -> Result<HintVector> {
    if mu.0.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.0.len(),
            found: x.len(),
        });
    }
    Ok(HintVector(mu.0.iter().zip(x).map(|(m, v)| m * v).collect()))
}

/// Batch form: masks `B × D_m` as 0/1 and the expanded `B × D` data masks.
pub fn expand_mask_batch(masks: &Matrix, layout: &ComponentLayout) -> Matrix {
    let mut mu = Matrix::zeros((masks.nrows(), layout.dim()));
    for (i, c) in layout.components.iter().enumerate() {
        for r in 0..masks.nrows() {
            if masks[[r, i]] != 0.0 {
                for d in c.range() {
                    mu[[r, d]] = 1.0;
                }
            }
        }
    }
    mu
}

/// Row weights for one component from its per-row value labels:
/// `f` = label frequency, `g = ln(f + 1)`, `h = g / Σg`, `w = h / f`.
pub fn component_weights(labels: &[usize]) -> Vec<f64> {
    let n_labels = labels.iter().max().map_or(0, |m| m + 1);
    let mut freq = vec![0usize; n_labels];
    for &l in labels {
        freq[l] += 1;
    }
    let g: Vec<f64> = freq
        .iter()
        .map(|&f| if f > 0 { (f as f64 + 1.0).ln() } else { 0.0 })
        .collect();
    let total: f64 = g.iter().sum();
    labels
        .iter()
        .map(|&l| g[l] / total / freq[l] as f64)
        .collect()
}

/// Per-component row-selection weights `W ∈ [0,1]^{M × D_m}`, stored by component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    columns: Vec<Vec<f64>>,
    cumulative: Vec<Vec<f64>>,
}

impl WeightMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Self {
        let cumulative = columns
            .iter()
            .map(|c| {
                let mut acc = 0.0;
                c.iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect()
            })
            .collect();
        Self {
            columns,
            cumulative,
        }
    }

    /// Every entry `1/M`.
    pub fn uniform(rows: usize, d_m: usize) -> Self {
        Self::from_columns(vec![vec![1.0 / rows as f64; rows]; d_m])
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_components(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.columns[c]
    }

    pub fn get(&self, row: usize, component: usize) -> f64 {
        self.columns[component][row]
    }

    /// Mean over the components selected by `m`, renormalised to sum to 1.
    pub fn row_weights(&self, m: &MaskIndicator) -> Vec<f64> {
        let sel: Vec<usize> = m.selected().collect();
        assert!(!sel.is_empty(), "row weights need a non-zero mask");
        let mut w = vec![0.0; self.rows()];
        for &c in &sel {
            for (acc, v) in w.iter_mut().zip(&self.columns[c]) {
                *acc += v;
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        w
    }

    /// Draws a row index from [`row_weights`](Self::row_weights).
    ///
    /// Because every column sums to one, the mean weight is an equal mixture
    /// of the selected columns: pick a selected component uniformly, then a
    /// row from that column.
    pub fn sample_row<R: Rng + ?Sized>(&self, m: &MaskIndicator, rng: &mut R) -> usize {
        let sel: Vec<usize> = m.selected().collect();
        assert!(!sel.is_empty(), "row sampling needs a non-zero mask");
        let c = sel[rng.random_range(0..sel.len())];
        let cdf = &self.cumulative[c];
        let u = rng.random::<f64>() * cdf[cdf.len() - 1];
        let i = cdf.partition_point(|&acc| acc <= u);
        if i < cdf.len() {
            i
        } else {
            self.columns[c].iter().rposition(|&w| w > 0.0).unwrap_or(cdf.len() - 1)
        }
    }
}

pub fn sample_training_row<R: Rng + ?Sized>(w: &WeightMatrix, m: &MaskIndicator, rng: &mut R) -> usize {
    w.sample_row(m, rng)
}

/// Builds `W` from an encoded table.
///
/// Discrete components are labelled by the hot index of their segment.
/// Continuous components are labelled by quantile bin of the raw column
/// values (`numeric_values[n]` for column `n`), using `min(bins, distinct)`
/// bins; empty bins never receive weight.
pub fn build_weight_matrix(
    table: &EncodedTable,
    numeric_values: &[Option<Vec<f64>>],
    bins: usize,
) -> WeightMatrix {
    let layout = &table.layout;
    let columns = layout
        .components
        .iter()
        .map(|c| {
            let labels: Vec<usize> = match c.kind {
                ComponentKind::Discrete => table
                    .data
                    .rows()
                    .into_iter()
                    .map(|row| crate::codec::argmax_slice(&row.as_slice().unwrap()[c.range()]))
                    .collect(),
                ComponentKind::Continuous => {
                    let values = numeric_values[c.column]
                        .as_ref()
                        .expect("continuous component without raw values");
                    let nbins = bins.min(stats::distinct_count(values)).max(1);
                    let cuts = stats::quantile_cuts(values, nbins);
                    values.iter().map(|&v| stats::bin_of(&cuts, v)).collect()
                }
            };
            component_weights(&labels)
        })
        .collect();
    WeightMatrix::from_columns(columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::ColumnKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example_weights() {
        // A,A,A,B
        let w = component_weights(&[0, 0, 0, 1]);
        let expected = [2.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0, 1.0 / 3.0];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_value_and_balanced_columns_are_uniform() {
        assert!(component_weights(&[0; 5]).iter().all(|w| (w - 0.2).abs() < 1e-15));
        assert!(component_weights(&[0, 1, 1, 0]).iter().all(|w| (w - 0.25).abs() < 1e-15));
    }

    #[test]
    fn mask_size_law_for_three_components() {
        let p = mask_size_probs(3);
        let expected = [6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn single_component_mask_is_always_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(sample_mask(1, &mut rng), MaskIndicator(vec![true]));
        }
    }

    #[test]
    fn masks_are_never_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5000 {
            assert!(sample_mask(7, &mut rng).count() >= 1);
        }
    }

    #[test]
    fn expansion_and_hints() {
        let layout = ComponentLayout::from_sizes(&[(ColumnKind::Categorical, 3), (ColumnKind::Numeric, 2)]);
        let mu = expand_mask(&MaskIndicator::ones(3), &layout).unwrap();
        assert_eq!(mu.0, vec![1.0; 6]);
        let mu = expand_mask(&MaskIndicator(vec![true, false, false]), &layout).unwrap();
        assert_eq!(mu.0, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let mu = expand_mask(&MaskIndicator(vec![false, true, false]), &layout).unwrap();
        assert_eq!(mu.0, vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        assert!(expand_mask(&MaskIndicator::ones(2), &layout).is_err());

        let h = make_hint(&DataMask(vec![1.0, 0.0, 1.0, 0.0]), &[0.5, -0.5, 1.0, 0.0]).unwrap();
        assert_eq!(h.0, vec![0.5, 0.0, 1.0, 0.0]);
        let x = [0.1, 0.2, 0.7, 1.0, 0.0, -0.3];
        assert_eq!(make_hint(&DataMask(vec![1.0; 6]), &x).unwrap().0, x.to_vec());
        assert!(make_hint(&DataMask(vec![1.0; 2]), &x).is_err());
    }

    #[test]
    fn hint_is_idempotent() {
        let mu = DataMask(vec![1.0, 0.0, 1.0, 1.0]);
        let once = make_hint(&mu, &[0.3, 0.9, -0.2, 0.0]).unwrap();
        let twice = make_hint(&mu, &once.0).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn two_component_mean_weights() {
        let w = WeightMatrix::from_columns(vec![vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.5, 0.5]]);
        let rw = w.row_weights(&MaskIndicator(vec![true, true]));
        assert!(rw.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let single = w.row_weights(&MaskIndicator(vec![true, false]));
        assert_eq!(single, vec![0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn zero_weight_rows_are_never_drawn() {
        let w = WeightMatrix::from_columns(vec![vec![0.0, 0.7, 0.0, 0.3]]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let r = w.sample_row(&MaskIndicator(vec![true]), &mut rng);
            assert!(r == 1 || r == 3);
        }
    }
}
