//! A trained generator together with everything needed to sample from it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Matrix;
use crate::codec::{ComponentKind, ComponentLayout, EncodedTable, TableCodec};
use crate::masking::HintVector;
use crate::nets::{DiscriminatorParams, GeneratorParams, NoiseSpec};
use crate::training::TrainConfig;

const HINT_QUANTILES: usize = 101;

/// Per-component empirical distribution of the training data, used to draw
/// the single revealed component that seeds generation.
///
/// With a uniformly drawn training row, revealing one component yields that
/// component's marginal; storing the marginal keeps the model independent of
/// the training rows. Discrete components keep hot-index frequencies,
/// continuous components keep 101 evenly spaced quantiles of the scalar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ComponentMarginal {
    Discrete(Vec<f64>),
    Continuous(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HintMarginals(pub Vec<ComponentMarginal>);

impl HintMarginals {
    pub fn from_table(table: &EncodedTable) -> Self {
        let data = &table.data;
        let rows = data.nrows() as f64;
        let marginals = table
            .layout
            .components
            .iter()
            .map(|c| match c.kind {
                ComponentKind::Discrete => {
                    let mut freq = vec![0.0; c.len];
                    for row in data.rows() {
                        let seg = &row.as_slice().unwrap()[c.range()];
                        freq[crate::codec::argmax_slice(seg)] += 1.0;
                    }
                    ComponentMarginal::Discrete(freq.into_iter().map(|f| f / rows).collect())
                }
                ComponentKind::Continuous => {
                    let values: Vec<f64> = data.column(c.offset).to_vec();
                    let sorted = crate::stats::sorted(&values);
                    let q = (0..HINT_QUANTILES)
                        .map(|i| crate::stats::quantile_sorted(&sorted, i as f64 / (HINT_QUANTILES - 1) as f64))
                        .collect();
                    ComponentMarginal::Continuous(q)
                }
            })
            .collect();
        Self(marginals)
    }

    /// Hint vector revealing only `component`, drawn from its marginal.
    pub fn sample_hint<R: Rng + ?Sized>(&self, layout: &ComponentLayout, component: usize, rng: &mut R) -> HintVector {
        let mut hint = vec![0.0; layout.dim()];
        let c = layout.components[component];
        match &self.0[component] {
            ComponentMarginal::Discrete(p) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = p.iter().rposition(|&v| v > 0.0).unwrap_or(0);
                for (i, &v) in p.iter().enumerate() {
                    acc += v;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                hint[c.offset + pick] = 1.0;
            }
            ComponentMarginal::Continuous(q) => {
                let pos = rng.random::<f64>() * (q.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(q.len() - 1);
                let frac = pos - lo as f64;
                hint[c.offset] = q[lo] + frac * (q[hi] - q[lo]);
            }
        }
        HintVector(hint)
    }
}

#[derive(Clone, Debug)]
pub struct TaeganModel {
    pub codec: TableCodec,
    pub config: TrainConfig,
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
    pub hint_marginals: HintMarginals,
    pub epochs_trained: usize,
}

impl TaeganModel {
    pub fn layout(&self) -> &ComponentLayout {
        &self.codec.layout
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            dim: self.config.net.noise_dim,
            all_gaussian: self.config.ablation.all_continuous_noise,
        }
    }

    /// Parameter names and values in a stable order: generator then critic.
    pub fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut names = self.generator.param_names();
        names.extend(self.discriminator.param_names());
        let mut params = self.generator.params();
        params.extend(self.discriminator.params());
        names.into_iter().zip(params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut params = self.generator.params_mut();
        params.extend(self.discriminator.params_mut());
        params
    }
}
