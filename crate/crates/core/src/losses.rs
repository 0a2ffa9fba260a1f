//! Training objectives: masked reconstruction, Wasserstein critic losses
//! with gradient penalty, the information loss on critic features, and the
//! interaction loss over pairwise outer products of encoded segments.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Matrix, Tape, Var};
use crate::codec::{ComponentKind, ComponentLayout};
use crate::error::{Error, Result};

/// How per-dimension differences of the interaction statistics are reduced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionReduction {
    /// Mean absolute difference of the means plus that of the sds.
    #[default]
    MeanAbs,
    /// Root mean squared difference of the means plus that of the sds.
    Rmse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Floor of the mask-size weighting of the reconstruction loss.
    pub tau: f64,
    pub lambda_gp: f64,
    pub lambda_info: f64,
    pub lambda_inter: f64,
    pub lambda_recon: f64,
    /// Interaction loss is skipped when the interaction factor is longer.
    pub interaction_cap: usize,
    pub interaction_reduction: InteractionReduction,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            tau: 0.2,
            lambda_gp: 10.0,
            lambda_info: 1.0,
            lambda_inter: 1.0,
            lambda_recon: 1.0,
            interaction_cap: 1_000_000,
            interaction_reduction: InteractionReduction::MeanAbs,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau {} outside (0, 1)", self.tau)));
        }
        for (name, v) in [
            ("lambda_gp", self.lambda_gp),
            ("lambda_info", self.lambda_info),
            ("lambda_inter", self.lambda_inter),
            ("lambda_recon", self.lambda_recon),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number")));
            }
        }
        Ok(())
    }
}

fn check_shape(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected.0 != found.0 {
        return Err(Error::DimensionMismatch {
            expected: expected.0,
            found: found.0,
        });
    }
    if expected.1 != found.1 {
        return Err(Error::DimensionMismatch {
            expected: expected.1,
            found: found.1,
        });
    }
    Ok(())
}

/// `τ + (1 − τ)·k/D_m`.
pub fn mask_weight(known: usize, d_m: usize, tau: f64) -> f64 {
    tau + (1.0 - tau) * known as f64 / d_m as f64
}

/// Batch mean of the per-row reconstruction loss: cross entropy of the raw
/// logits against each one-hot target segment plus smooth L1 (β = 1) on the
/// continuous scalars, scaled by [`mask_weight`].
///
/// `generated` is `B × D` (continuous dims are read from it), `logits` is
/// the raw decoder output, `target` the real encoded rows and `masks` the
/// `B × D_m` mask indicators.
pub fn reconstruction_loss<'t>(
    generated: Var<'t>,
    logits: Var<'t>,
    target: &Matrix,
    masks: &Matrix,
    layout: &ComponentLayout,
    tau: f64,
) -> Result<Var<'t>> {
    let rows = target.nrows();
    check_shape((rows, layout.dim()), generated.shape())?;
    check_shape((rows, layout.dim()), logits.shape())?;
    check_shape((rows, layout.dim()), target.dim())?;
    check_shape((rows, layout.n_components()), masks.dim())?;
    let tape = generated.tape();

    let mut per_row = tape.constant(Matrix::zeros((rows, 1)));
    let mut discrete_terms = Vec::new();
    let mut continuous_dims = Vec::new();
    for c in &layout.components {
        match c.kind {
            ComponentKind::Discrete => {
                let target_seg = target.slice(ndarray::s![.., c.offset..c.offset + c.len]).to_owned();
                let logp = logits.cols(c.offset, c.len).log_softmax_rows();
                discrete_terms.push(logp.mul(tape.constant(target_seg)).sum_cols().neg());
            }
            ComponentKind::Continuous => continuous_dims.extend(c.range()),
        }
    }
    for t in discrete_terms {
        per_row = per_row.add(t);
    }
    if !continuous_dims.is_empty() {
        let idx = Rc::new(continuous_dims);
        let want = Matrix::from_shape_fn((rows, idx.len()), |(r, j)| target[[r, idx[j]]]);
        let diff = generated.gather_cols(idx).sub(tape.constant(want));
        let quad = diff.value().mapv(|d| if d.abs() < 1.0 { 1.0 } else { 0.0 });
        let lin = quad.mapv(|q| 1.0 - q);
        let smooth = diff
            .square()
            .scale(0.5)
            .mul(tape.constant(quad))
            .add(diff.abs().add_scalar(-0.5).mul(tape.constant(lin)));
        per_row = per_row.add(smooth.sum_cols());
    }
    let d_m = layout.n_components();
    let weights = Matrix::from_shape_fn((rows, 1), |(r, _)| {
        let known = masks.row(r).iter().filter(|v| **v > 0.5).count();
        mask_weight(known, d_m, tau)
    });
    Ok(per_row.mul(tape.constant(weights)).mean())
}

/// `(mean(fake) − mean(real), −mean(fake))`.
pub fn wasserstein_losses<'t>(score_real: Var<'t>, score_fake: Var<'t>) -> (Var<'t>, Var<'t>) {
    let d_loss = score_fake.mean().sub(score_real.mean());
    let g_loss = score_fake.mean().neg();
    (d_loss, g_loss)
}

/// WGAN-GP penalty `λ·mean_rows (‖∇ critic(x̂)‖₂ − 1)²` on per-row random
/// interpolates `x̂ = ε·real + (1 − ε)·fake`.
///
/// `critic` maps a `B × D` batch to `B × 1` scores; the penalty is recorded
/// on the tape so it can be differentiated with respect to the critic's
/// parameters.
pub fn gradient_penalty<'t, R: Rng + ?Sized>(
    tape: &'t Tape,
    mut critic: impl FnMut(Var<'t>) -> Var<'t>,
    real: &Matrix,
    fake: &Matrix,
    lambda: f64,
    rng: &mut R,
) -> Result<Var<'t>> {
    check_shape(real.dim(), fake.dim())?;
    let eps: Vec<f64> = (0..real.nrows()).map(|_| rng.random::<f64>()).collect();
    let mixed = Matrix::from_shape_fn(real.dim(), |(r, c)| eps[r] * real[[r, c]] + (1.0 - eps[r]) * fake[[r, c]]);
    let x_hat = tape.param(mixed);
    let scores = critic(x_hat);
    let grad = tape.grad(scores.sum(), &[x_hat])[0];
    let norm = grad.square().sum_cols().sqrt();
    Ok(norm.add_scalar(-1.0).square().mean().scale(lambda))
}

/// Column means (`1 × C`) and sample standard deviations (`1 × C`, ddof 1).
fn column_moments(x: Var<'_>) -> (Var<'_>, Var<'_>) {
    let rows = x.shape().0 as f64;
    let mean = x.sum_rows().scale(1.0 / rows);
    let var = x.sub(mean).square().sum_rows().scale(1.0 / (rows - 1.0));
    (mean, var.sqrt())
}

/// `‖Δ mean‖₂ + ‖Δ sd‖₂` of critic features between the two batches.
pub fn information_loss<'t>(feat_real: Var<'t>, feat_fake: Var<'t>) -> Result<Var<'t>> {
    let (rr, cr) = feat_real.shape();
    let (rf, cf) = feat_fake.shape();
    if cr != cf {
        return Err(Error::DimensionMismatch { expected: cr, found: cf });
    }
    let need = rr.min(rf);
    if need < 2 {
        return Err(Error::BatchTooSmall { need: 2, got: need });
    }
    let (mr, sr) = column_moments(feat_real);
    let (mf, sf) = column_moments(feat_fake);
    Ok(mr.sub(mf).square().sum().sqrt().add(sr.sub(sf).square().sum().sqrt()))
}

/// Column index pairs whose products make up the interaction factor: every
/// unordered pair of distinct component segments, each pair contributing the
/// row-major flattening of the segments' outer product.
#[derive(Clone, Debug)]
pub struct InteractionPairs {
    pub left: Rc<Vec<usize>>,
    pub right: Rc<Vec<usize>>,
}

impl InteractionPairs {
    pub fn new(layout: &ComponentLayout) -> Self {
        let comps = &layout.components;
        let mut left = Vec::with_capacity(interaction_len(layout));
        let mut right = Vec::with_capacity(left.capacity());
        for i in 0..comps.len() {
            for j in i + 1..comps.len() {
                for a in comps[i].range() {
                    for b in comps[j].range() {
                        left.push(a);
                        right.push(b);
                    }
                }
            }
        }
        Self {
            left: Rc::new(left),
            right: Rc::new(right),
        }
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }
}

/// `Σ_{i<j} |seg_i|·|seg_j|` without materialising the pairs.
pub fn interaction_len(layout: &ComponentLayout) -> usize {
    let sizes: Vec<usize> = layout.components.iter().map(|c| c.len).collect();
    let total: usize = sizes.iter().sum();
    let squares: usize = sizes.iter().map(|s| s * s).sum();
    (total * total - squares) / 2
}

/// Interaction factor of a single encoded row.
pub fn interaction_factor(x: &[f64], layout: &ComponentLayout) -> Result<Vec<f64>> {
    if x.len() != layout.dim() {
        return Err(Error::DimensionMismatch {
            expected: layout.dim(),
            found: x.len(),
        });
    }
    let pairs = InteractionPairs::new(layout);
    Ok(pairs.left.iter().zip(pairs.right.iter()).map(|(&a, &b)| x[a] * x[b]).collect())
}

/// Interaction factors of a `B × D` batch, `B × |ρ|`.
pub fn interaction_factor_batch<'t>(x: Var<'t>, pairs: &InteractionPairs) -> Var<'t> {
    x.gather_cols(pairs.left.clone()).mul(x.gather_cols(pairs.right.clone()))
}

/// Difference of per-dimension means and sample sds of the interaction
/// factors of two batches, reduced per [`InteractionReduction`].
pub fn interaction_loss<'t>(
    real: Var<'t>,
    fake: Var<'t>,
    pairs: &InteractionPairs,
    reduction: InteractionReduction,
) -> Result<Var<'t>> {
    let need = real.shape().0.min(fake.shape().0);
    if need < 2 {
        return Err(Error::BatchTooSmall { need: 2, got: need });
    }
    if real.shape().1 != fake.shape().1 {
        return Err(Error::DimensionMismatch {
            expected: real.shape().1,
            found: fake.shape().1,
        });
    }
    if pairs.is_empty() {
        return Ok(real.tape().scalar(0.0));
    }
    let (mr, sr) = column_moments(interaction_factor_batch(real, pairs));
    let (mf, sf) = column_moments(interaction_factor_batch(fake, pairs));
    let reduce = |d: Var<'t>| match reduction {
        InteractionReduction::MeanAbs => d.abs().mean(),
        InteractionReduction::Rmse => d.square().mean().sqrt(),
    };
    Ok(reduce(mr.sub(mf)).add(reduce(sr.sub(sf))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::ColumnKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn val(v: Var<'_>) -> f64 {
        v.item()
    }

    #[test]
    fn mask_weight_endpoints() {
        assert_eq!(mask_weight(4, 4, 0.2), 1.0);
        assert!((mask_weight(2, 4, 0.2) - 0.6).abs() < 1e-15);
        assert!((mask_weight(1, 5, 0.2) - (0.2 + 0.8 / 5.0)).abs() < 1e-15);
    }

    #[test]
    fn reconstruction_of_perfect_output_is_cross_entropy_floor() {
        // one categorical (3) + one numeric (mode 2 + scalar)
        let layout = ComponentLayout::from_sizes(&[(ColumnKind::Categorical, 3), (ColumnKind::Numeric, 2)]);
        let target = Matrix::from_shape_vec((1, 6), vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.3]).unwrap();
        let big = 50.0;
        let logits = target.mapv(|v| v * big);
        let masks = Matrix::from_shape_vec((1, 3), vec![1.0, 0.0, 1.0]).unwrap();
        let tape = Tape::new();
        let loss = reconstruction_loss(
            tape.constant(target.clone()),
            tape.constant(logits),
            &target,
            &masks,
            &layout,
            0.2,
        )
        .unwrap();
        // ce(seg of 3) = ln(1 + 2e^-50), ce(seg of 2) = ln(1 + e^-50)
        let floor = (1.0 + 2.0 * (-big).exp()).ln() + (1.0 + (-big).exp()).ln();
        let want = floor * mask_weight(2, 3, 0.2);
        assert!((val(loss) - want).abs() < 1e-15);
    }

    #[test]
    fn smooth_l1_branches() {
        let layout = ComponentLayout::from_sizes(&[(ColumnKind::Numeric, 1)]);
        let target = Matrix::from_shape_vec((2, 2), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let gen = Matrix::from_shape_vec((2, 2), vec![1.0, 0.5, 1.0, -2.0]).unwrap();
        let logits = Matrix::from_shape_vec((2, 2), vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let masks = Matrix::ones((2, 2));
        let tape = Tape::new();
        let loss = reconstruction_loss(tape.constant(gen), tape.constant(logits), &target, &masks, &layout, 0.2).unwrap();
        // single-category segment: ce = 0; rows 0.125 and 1.5
        assert!((val(loss) - (0.125 + 1.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn wasserstein_arithmetic() {
        let tape = Tape::new();
        let real = tape.constant(Matrix::zeros((2, 1)));
        let fake = tape.constant(Matrix::ones((2, 1)));
        let (d, g) = wasserstein_losses(real, fake);
        assert_eq!((val(d), val(g)), (1.0, -1.0));
        let (d2, _) = wasserstein_losses(real.add_scalar(7.5), fake.add_scalar(7.5));
        assert!((val(d2) - 1.0).abs() < 1e-15);
    }

    fn linear_penalty(w: &[f64], lambda: f64) -> f64 {
        let tape = Tape::new();
        let wv = tape.constant(Matrix::from_shape_vec((w.len(), 1), w.to_vec()).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let real = Matrix::from_shape_fn((5, w.len()), |(r, c)| (r * 3 + c) as f64 * 0.7 - 2.0);
        let fake = Matrix::from_shape_fn((5, w.len()), |(r, c)| ((r + c) as f64).sin());
        let gp = gradient_penalty(&tape, |x| x.matmul(wv), &real, &fake, lambda, &mut rng).unwrap();
        gp.item()
    }

    #[test]
    fn gradient_penalty_linear_closed_form() {
        assert!(linear_penalty(&[0.6, 0.8, 0.0], 10.0).abs() < 1e-12);
        assert!((linear_penalty(&[3.0, 0.0, 0.0], 10.0) - 40.0).abs() < 1e-10);
        assert!((linear_penalty(&[1.0, 2.0, 2.0], 10.0) - 40.0).abs() < 1e-10);
    }

    #[test]
    fn information_loss_shift_and_identity() {
        let tape = Tape::new();
        let a = Matrix::from_shape_fn((6, 3), |(r, c)| ((r * 7 + c * 3) % 5) as f64);
        let shifted = &a + &Matrix::from_shape_vec((1, 3), vec![3.0, 0.0, 4.0]).unwrap();
        let same = information_loss(tape.constant(a.clone()), tape.constant(a.clone())).unwrap();
        assert_eq!(val(same), 0.0);
        let l = information_loss(tape.constant(a.clone()), tape.constant(shifted)).unwrap();
        assert!((val(l) - 5.0).abs() < 1e-12);
        let one = tape.constant(Matrix::zeros((1, 3)));
        assert!(information_loss(one, one).is_err());
    }

    #[test]
    fn interaction_factor_examples() {
        let layout = ComponentLayout::from_sizes(&[(ColumnKind::Categorical, 2), (ColumnKind::Categorical, 3)]);
        let rho = interaction_factor(&[0.0, 1.0, 0.0, 0.0, 1.0], &layout).unwrap();
        assert_eq!(rho, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);

        let layout = ComponentLayout::from_sizes(&[(ColumnKind::Numeric, 2)]);
        // mode one-hot (1, 0) and scalar 0.5
        assert_eq!(interaction_factor(&[1.0, 0.0, 0.5], &layout).unwrap(), vec![0.5, 0.0]);

        let layout = ComponentLayout::from_sizes(&[(ColumnKind::Categorical, 2), (ColumnKind::Categorical, 3), (ColumnKind::Categorical, 1)]);
        assert_eq!(interaction_len(&layout), 11);
        assert_eq!(InteractionPairs::new(&layout).len(), 11);
    }

    #[test]
    fn interaction_loss_detects_broken_dependence() {
        let layout = ComponentLayout::from_sizes(&[(ColumnKind::Categorical, 2), (ColumnKind::Categorical, 2)]);
        let pairs = InteractionPairs::new(&layout);
        let real = Matrix::from_shape_vec(
            (4, 4),
            vec![1., 0., 1., 0., 1., 0., 1., 0., 0., 1., 0., 1., 0., 1., 0., 1.],
        )
        .unwrap();
        let indep = Matrix::from_shape_vec(
            (4, 4),
            vec![1., 0., 1., 0., 1., 0., 0., 1., 0., 1., 1., 0., 0., 1., 0., 1.],
        )
        .unwrap();
        let tape = Tape::new();
        let r = tape.constant(real.clone());
        let same = interaction_loss(r, r, &pairs, InteractionReduction::MeanAbs).unwrap();
        assert_eq!(val(same), 0.0);
        let l = interaction_loss(r, tape.constant(indep), &pairs, InteractionReduction::MeanAbs).unwrap();
        assert!(val(l) > 0.0);
        // permuting rows leaves the loss unchanged
        let perm = Matrix::from_shape_fn((4, 4), |(i, j)| real[[3 - i, j]]);
        let p = interaction_loss(tape.constant(perm), tape.constant(real), &pairs, InteractionReduction::Rmse).unwrap();
        assert!(val(p).abs() < 1e-15);
    }
}
