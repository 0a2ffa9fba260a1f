//! Row generation by growing the mask one component at a time.
//!
//! Each row gets its own order: discrete components first, then continuous
//! ones, each group shuffled. The first component is drawn from its training
//! marginal; every later component is read from a generator pass that sees
//! all components fixed so far. Earlier values are never overwritten.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Matrix, Tape};
use crate::codec::{ComponentKind, ComponentLayout, RawTable};
use crate::error::{Error, Result};
use crate::model::TaeganModel;
use crate::nets::{generator_forward, sample_noise_batch, GeneratorInput};

/// Linear temperature law over the number of known components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemperatureSchedule {
    /// Temperature with one known component.
    pub t_max: f64,
    /// Temperature with every component known.
    pub t_min: f64,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        Self { t_max: 1.0, t_min: 0.2 }
    }
}

impl TemperatureSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0) {
            return Err(Error::BadTemperature(self.t_min));
        }
        if !(self.t_max >= self.t_min) || !self.t_max.is_finite() {
            return Err(Error::BadTemperature(self.t_max));
        }
        Ok(())
    }
}

/// `t_max − (t_max − t_min)·(k − 1)/(D_m − 1)`, or `t_max` when `D_m = 1`.
pub fn temperature(known: usize, d_m: usize, sched: &TemperatureSchedule) -> Result<f64> {
    if known == 0 || known > d_m {
        return Err(Error::KnownOutOfRange { k: known, max: d_m });
    }
    if d_m == 1 {
        return Ok(sched.t_max);
    }
    Ok(sched.t_max - (sched.t_max - sched.t_min) * (known - 1) as f64 / (d_m - 1) as f64)
}

/// Discrete component indices in random order followed by continuous ones
/// in random order.
pub fn generation_order<R: Rng + ?Sized>(layout: &ComponentLayout, rng: &mut R) -> Vec<usize> {
    let mut discrete: Vec<usize> = Vec::new();
    let mut continuous: Vec<usize> = Vec::new();
    for (i, c) in layout.components.iter().enumerate() {
        match c.kind {
            ComponentKind::Discrete => discrete.push(i),
            ComponentKind::Continuous => continuous.push(i),
        }
    }
    discrete.shuffle(rng);
    continuous.shuffle(rng);
    discrete.extend(continuous);
    discrete
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisOptions {
    /// Regenerate every component with the full mask after the last one is
    /// fixed. When off, the assembled hint is the output.
    pub final_pass: bool,
    /// Rows generated per generator call.
    pub batch_rows: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            final_pass: true,
            batch_rows: 500,
        }
    }
}

/// One generator pass over a batch of partially generated rows.
pub struct GenerationStep<'a> {
    /// Known components per row (identical across the batch).
    pub known: usize,
    pub temperature: f64,
    pub masks: &'a Matrix,
    /// Raw decoder output, `B × D`.
    pub logits: &'a Matrix,
}

/// Generates `n` encoded rows. `observer` sees every generator pass.
pub fn sample_encoded<R: Rng + ?Sized>(
    model: &TaeganModel,
    n: usize,
    opts: &SynthesisOptions,
    rng: &mut R,
    mut observer: Option<&mut dyn FnMut(&GenerationStep<'_>)>,
) -> Result<Matrix> {
    if model.epochs_trained == 0 {
        return Err(Error::Untrained);
    }
    if n == 0 {
        return Err(Error::ZeroRows);
    }
    let layout = model.layout();
    let d_m = layout.n_components();
    let spec = model.noise_spec();
    let cfg = &model.config.net;
    let sched = &model.config.temperature;
    let chunk = opts.batch_rows.max(1);
    let mut out = Matrix::zeros((n, layout.dim()));

    let mut start = 0;
    while start < n {
        let rows = chunk.min(n - start);
        let orders: Vec<Vec<usize>> = (0..rows).map(|_| generation_order(layout, rng)).collect();
        let mut masks = Matrix::zeros((rows, d_m));
        let mut hints = Matrix::zeros((rows, layout.dim()));
        for (r, order) in orders.iter().enumerate() {
            let first = order[0];
            masks[[r, first]] = 1.0;
            let h = model.hint_marginals.sample_hint(layout, first, rng);
            hints.row_mut(r).assign(&ndarray::ArrayView1::from(&h.0));
        }

        let mut pass = |masks: &Matrix, hints: &Matrix, known: usize, rng: &mut R| -> Result<Matrix> {
            let t = temperature(known, d_m, sched)?;
            let temps = vec![t; rows];
            let noise = sample_noise_batch(&spec, rows, rng)?;
            let tape = Tape::new();
            let g = model.generator.bind(&tape, false);
            let input = GeneratorInput {
                masks,
                hints,
                noise: &noise,
                temperature: &temps,
            };
            let res = generator_forward(&g, &tape, layout, cfg, &input, rng, false)?;
            if let Some(obs) = observer.as_deref_mut() {
                obs(&GenerationStep {
                    known,
                    temperature: t,
                    masks,
                    logits: &res.logits.value(),
                });
            }
            Ok((*res.hard.value()).clone())
        };

        for i in 1..d_m {
            let generated = pass(&masks, &hints, i, rng)?;
            for (r, order) in orders.iter().enumerate() {
                let c = order[i];
                masks[[r, c]] = 1.0;
                for d in layout.components[c].range() {
                    hints[[r, d]] = generated[[r, d]];
                }
            }
        }
        let block = if opts.final_pass {
            pass(&masks, &hints, d_m, rng)?
        } else {
            hints
        };
        out.slice_mut(ndarray::s![start..start + rows, ..]).assign(&block);
        start += rows;
    }
    Ok(out)
}

pub fn sample_table<R: Rng + ?Sized>(model: &TaeganModel, n: usize, opts: &SynthesisOptions, rng: &mut R) -> Result<RawTable> {
    let encoded = sample_encoded(model, n, opts, rng, None)?;
    model.codec.decode_table(&encoded)
}

pub fn sample_row<R: Rng + ?Sized>(model: &TaeganModel, rng: &mut R) -> Result<Vec<String>> {
    let opts = SynthesisOptions {
        batch_rows: 1,
        ..SynthesisOptions::default()
    };
    let table = sample_table(model, 1, &opts, rng)?;
    Ok(table.rows.into_iter().next().expect("one row"))
}

/// Convenience wrapper seeding a fresh generator.
pub fn sample_table_seeded(model: &TaeganModel, n: usize, opts: &SynthesisOptions, seed: u64) -> Result<RawTable> {
    sample_table(model, n, opts, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::ColumnKind;

    #[test]
    fn temperature_endpoints_and_midpoint() {
        let s = TemperatureSchedule::default();
        assert_eq!(temperature(1, 5, &s).unwrap(), 1.0);
        assert!((temperature(5, 5, &s).unwrap() - 0.2).abs() < 1e-15);
        assert!((temperature(3, 5, &s).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(temperature(1, 1, &s).unwrap(), 1.0);
        assert!(temperature(0, 5, &s).is_err());
        assert!(temperature(6, 5, &s).is_err());
    }

    #[test]
    fn order_has_discrete_prefix() {
        let layout = ComponentLayout::from_sizes(&[
            (ColumnKind::Numeric, 2),
            (ColumnKind::Categorical, 3),
            (ColumnKind::Numeric, 1),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let o = generation_order(&layout, &mut rng);
            let mut sorted = o.clone();
            sorted.sort();
            assert_eq!(sorted, (0..5).collect::<Vec<_>>());
            let kinds: Vec<_> = o.iter().map(|&c| layout.components[c].kind).collect();
            assert!(kinds[..3].iter().all(|k| *k == ComponentKind::Discrete));
            assert!(kinds[3..].iter().all(|k| *k == ComponentKind::Continuous));
        }
    }
}
