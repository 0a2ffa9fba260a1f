//! Generator (encoder + decoder) and critic MLPs.
//!
//! Hidden blocks are `linear → layer norm → CombU → dropout`. The encoder
//! reads `m ⊕ γ` and emits an embedding; the decoder reads the embedding
//! concatenated with noise and emits one pre-activation per encoded
//! dimension. The critic reads `m ⊕ x` and exposes its last hidden block as
//! a feature vector.

use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autograd::{Matrix, Tape, Var};
use crate::codec::{ComponentKind, ComponentLayout};
use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Negative-side slope of the leaky partition of CombU.
pub const LEAK_SLOPE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub embedding_dim: usize,
    pub noise_dim: usize,
    pub dropout: f64,
    /// Gumbel-softmax relaxation temperature for training-time soft samples.
    pub gumbel_tau: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 6,
            hidden_width: 256,
            embedding_dim: 256,
            noise_dim: 128,
            dropout: 0.2,
            gumbel_tau: 0.2,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.noise_dim.is_multiple_of(2) {
            return Err(Error::OddNoiseDim(self.noise_dim));
        }
        if self.hidden_width == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.gumbel_tau <= 0.0 {
            return Err(Error::BadTemperature(self.gumbel_tau));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// CombU
// ---------------------------------------------------------------------------

/// Elementary activation assigned to one partition of a hidden layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Elu,
    LeakyRelu,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Elu => {
                if v > 0.0 {
                    v
                } else {
                    v.exp_m1()
                }
            }
            Activation::LeakyRelu => {
                if v > 0.0 {
                    v
                } else {
                    LEAK_SLOPE * v
                }
            }
        }
    }

    pub fn derivative(self, v: f64) -> f64 {
        match (self, v > 0.0) {
            (_, true) => 1.0,
            (Activation::Relu, false) => 0.0,
            (Activation::Elu, false) => v.exp(),
            (Activation::LeakyRelu, false) => LEAK_SLOPE,
        }
    }
}

/// Activation of unit `j` in a layer of width `width`: contiguous thirds
/// (boundaries rounded) get relu, elu and leaky relu.
pub fn combu_partition(j: usize, width: usize) -> Activation {
    const ORDER: [Activation; 3] = [Activation::Relu, Activation::Elu, Activation::LeakyRelu];
    let bound = |i: usize| (width * i + 1) / 3;
    let part = (1..3).take_while(|&i| j >= bound(i)).count();
    ORDER[part]
}

pub fn combu(v: &[f64]) -> Vec<f64> {
    v.iter()
        .enumerate()
        .map(|(j, &x)| combu_partition(j, v.len()).apply(x))
        .collect()
}

/// Diagonal of the CombU Jacobian.
pub fn combu_derivative(v: &[f64]) -> Vec<f64> {
    v.iter()
        .enumerate()
        .map(|(j, &x)| combu_partition(j, v.len()).derivative(x))
        .collect()
}

/// CombU on a `B × H` var: `x ⊙ A + (exp(x ⊙ N) − 1) ⊙ N` with constant masks.
fn combu_var(x: Var<'_>) -> Var<'_> {
    let tape = x.tape();
    let v = x.value();
    let width = v.ncols();
    let kinds: Vec<Activation> = (0..width).map(|j| combu_partition(j, width)).collect();
    let mut linear = Matrix::zeros(v.dim());
    let mut elu_neg = Matrix::zeros(v.dim());
    for ((r, j), &x) in v.indexed_iter() {
        match (kinds[j], x > 0.0) {
            (_, true) => linear[[r, j]] = 1.0,
            (Activation::Relu, false) => {}
            (Activation::LeakyRelu, false) => linear[[r, j]] = LEAK_SLOPE,
            (Activation::Elu, false) => elu_neg[[r, j]] = 1.0,
        }
    }
    let neg = tape.constant(elu_neg);
    x.mul(tape.constant(linear))
        .add(x.mul(neg).exp().add_scalar(-1.0).mul(neg))
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `in × out`
    pub weight: Matrix,
    /// `1 × out`
    pub bias: Matrix,
}

impl Linear {
    /// Uniform fan-in initialisation, zero bias.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: Matrix::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound)),
            bias: Matrix::zeros((1, fan_out)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gain: Matrix,
    pub shift: Matrix,
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gain: Matrix::ones((1, width)),
            shift: Matrix::zeros((1, width)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub hidden: Vec<(Linear, LayerNorm)>,
    pub output: Linear,
}

impl Mlp {
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        width: usize,
        layers: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let mut hidden = Vec::with_capacity(layers);
        let mut fan_in = input;
        for _ in 0..layers {
            hidden.push((Linear::init(fan_in, width, rng), LayerNorm::new(width)));
            fan_in = width;
        }
        Self {
            hidden,
            output: Linear::init(fan_in, output, rng),
        }
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for (lin, ln) in &self.hidden {
            out.extend([&lin.weight, &lin.bias, &ln.gain, &ln.shift]);
        }
        out.extend([&self.output.weight, &self.output.bias]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for (lin, ln) in &mut self.hidden {
            out.extend([&mut lin.weight, &mut lin.bias, &mut ln.gain, &mut ln.shift]);
        }
        out.extend([&mut self.output.weight, &mut self.output.bias]);
        out
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.hidden.len() {
            for p in ["weight", "bias", "ln_gain", "ln_shift"] {
                out.push(format!("{prefix}.hidden{i}.{p}"));
            }
        }
        out.push(format!("{prefix}.out.weight"));
        out.push(format!("{prefix}.out.bias"));
        out
    }

    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundMlp<'t> {
        let vars = self
            .params()
            .into_iter()
            .map(|p| {
                if trainable {
                    tape.param(p.clone())
                } else {
                    tape.constant(p.clone())
                }
            })
            .collect();
        BoundMlp {
            vars,
            layers: self.hidden.len(),
        }
    }
}

/// Dropout settings for one forward pass.
pub struct Dropout<'r, R: Rng + ?Sized> {
    pub rate: f64,
    pub rng: &'r mut R,
}

/// MLP parameters recorded on a tape.
pub struct BoundMlp<'t> {
    pub vars: Vec<Var<'t>>,
    layers: usize,
}

impl<'t> BoundMlp<'t> {
    /// Returns `(output, last hidden activation)`. With zero hidden layers
    /// the second element is the input.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: Var<'t>,
        mut dropout: Option<&mut Dropout<'_, R>>,
    ) -> (Var<'t>, Var<'t>) {
        let tape = x.tape();
        let mut h = x;
        for i in 0..self.layers {
            let p = &self.vars[4 * i..4 * i + 4];
            let z = h.matmul(p[0]).add(p[1]);
            let width = z.shape().1 as f64;
            let centred = z.sub(z.sum_cols().scale(1.0 / width));
            let var = centred.square().sum_cols().scale(1.0 / width);
            let normed = centred.div(var.add_scalar(LAYER_NORM_EPS).sqrt());
            h = combu_var(normed.mul(p[2]).add(p[3]));
            if let Some(d) = dropout.as_deref_mut() {
                if d.rate > 0.0 {
                    let keep = 1.0 - d.rate;
                    let mask = Matrix::from_shape_fn(h.shape(), |_| {
                        if d.rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    h = h.mul(tape.constant(mask));
                }
            }
        }
        let n = self.vars.len();
        let out = h.matmul(self.vars[n - 2]).add(self.vars[n - 1]);
        (out, h)
    }
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub dim: usize,
    /// When set every dimension is Gaussian (ablation); otherwise the second
    /// half is fair Bernoulli in {0, 1}.
    pub all_gaussian: bool,
}

impl NoiseSpec {
    pub fn new(dim: usize) -> Result<Self> {
        if !dim.is_multiple_of(2) {
            return Err(Error::OddNoiseDim(dim));
        }
        Ok(Self {
            dim,
            all_gaussian: false,
        })
    }

    pub fn continuous_dims(&self) -> usize {
        if self.all_gaussian {
            self.dim
        } else {
            self.dim / 2
        }
    }

    pub fn discrete_dims(&self) -> usize {
        self.dim - self.continuous_dims()
    }
}

pub fn sample_noise<R: Rng + ?Sized>(spec: &NoiseSpec, rng: &mut R) -> Result<Vec<f64>> {
    if !spec.dim.is_multiple_of(2) {
        return Err(Error::OddNoiseDim(spec.dim));
    }
    let cont = spec.continuous_dims();
    Ok((0..spec.dim)
        .map(|i| {
            if i < cont {
                StandardNormal.sample(rng)
            } else if rng.random::<bool>() {
                1.0
            } else {
                0.0
            }
        })
        .collect())
}

pub fn sample_noise_batch<R: Rng + ?Sized>(spec: &NoiseSpec, rows: usize, rng: &mut R) -> Result<Matrix> {
    let mut z = Matrix::zeros((rows, spec.dim));
    for mut row in z.rows_mut() {
        let v = sample_noise(spec, rng)?;
        row.assign(&ndarray::ArrayView1::from(&v));
    }
    Ok(z)
}

// ---------------------------------------------------------------------------
// Generator and critic
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl GeneratorParams {
    pub fn init<R: Rng + ?Sized>(layout: &ComponentLayout, cfg: &NetConfig, rng: &mut R) -> Self {
        let input = layout.n_components() + layout.dim();
        Self {
            encoder: Mlp::init(input, cfg.hidden_width, cfg.hidden_layers, cfg.embedding_dim, rng),
            decoder: Mlp::init(
                cfg.embedding_dim + cfg.noise_dim,
                cfg.hidden_width,
                cfg.hidden_layers,
                layout.dim(),
                rng,
            ),
        }
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut n = self.encoder.param_names("generator.encoder");
        n.extend(self.decoder.param_names("generator.decoder"));
        n
    }

    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundGenerator<'t> {
        BoundGenerator {
            encoder: self.encoder.bind(tape, trainable),
            decoder: self.decoder.bind(tape, trainable),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams {
    pub body: Mlp,
}

impl DiscriminatorParams {
    pub fn init<R: Rng + ?Sized>(layout: &ComponentLayout, cfg: &NetConfig, rng: &mut R) -> Self {
        let input = layout.n_components() + layout.dim();
        Self {
            body: Mlp::init(input, cfg.hidden_width, cfg.hidden_layers, 1, rng),
        }
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.body.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.body.params_mut()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.body.param_names("discriminator")
    }

    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundMlp<'t> {
        self.body.bind(tape, trainable)
    }
}

pub struct BoundGenerator<'t> {
    pub encoder: BoundMlp<'t>,
    pub decoder: BoundMlp<'t>,
}

impl<'t> BoundGenerator<'t> {
    pub fn vars(&self) -> Vec<Var<'t>> {
        let mut v = self.encoder.vars.clone();
        v.extend(self.decoder.vars.iter().copied());
        v
    }
}

/// Generator outputs for a batch.
pub struct GeneratorOutput<'t> {
    /// Gumbel-softmax probabilities on discrete segments, tanh on scalars.
    pub soft: Var<'t>,
    /// Straight-through one-hot samples on discrete segments, tanh on scalars.
    pub hard: Var<'t>,
    /// Raw decoder output, one pre-activation per encoded dimension.
    pub logits: Var<'t>,
}

/// Per-call inputs to the generator.
pub struct GeneratorInput<'a> {
    /// `B × D_m`, 0/1.
    pub masks: &'a Matrix,
    /// `B × D`
    pub hints: &'a Matrix,
    /// `B × noise_dim`
    pub noise: &'a Matrix,
    /// One temperature per row; discrete logits are divided by it.
    pub temperature: &'a [f64],
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub fn generator_forward<'t, R: Rng + ?Sized>(
    gen: &BoundGenerator<'t>,
    tape: &'t Tape,
    layout: &ComponentLayout,
    cfg: &NetConfig,
    input: &GeneratorInput<'_>,
    rng: &mut R,
    train: bool,
) -> Result<GeneratorOutput<'t>> {
    let rows = input.masks.nrows();
    check_dim(layout.n_components(), input.masks.ncols())?;
    check_dim(layout.dim(), input.hints.ncols())?;
    check_dim(cfg.noise_dim, input.noise.ncols())?;
    check_dim(rows, input.hints.nrows())?;
    check_dim(rows, input.noise.nrows())?;
    check_dim(rows, input.temperature.len())?;
    if let Some(&t) = input.temperature.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::BadTemperature(t));
    }

    let enc_in = Var::concat_cols(&[tape.constant(input.masks.clone()), tape.constant(input.hints.clone())]);
    let mut dropout = Dropout {
        rate: cfg.dropout,
        rng: &mut *rng,
    };
    let (embedding, _) = gen.encoder.forward(enc_in, train.then_some(&mut dropout));
    let dec_in = Var::concat_cols(&[embedding, tape.constant(input.noise.clone())]);
    let (logits, _) = gen.decoder.forward(dec_in, train.then_some(&mut dropout));

    let inv_temp = tape.constant(Matrix::from_shape_fn((rows, 1), |(r, _)| 1.0 / input.temperature[r]));
    let mut soft_parts = Vec::with_capacity(layout.n_components());
    let mut hard_parts = Vec::with_capacity(layout.n_components());
    for c in &layout.components {
        let seg = logits.cols(c.offset, c.len);
        match c.kind {
            ComponentKind::Discrete => {
                let gumbel = Matrix::from_shape_fn((rows, c.len), |_| {
                    let u: f64 = rng.random_range(f64::EPSILON..1.0);
                    -(-u.ln()).ln()
                });
                let soft = seg
                    .mul(inv_temp)
                    .add(tape.constant(gumbel))
                    .scale(1.0 / cfg.gumbel_tau)
                    .softmax_rows();
                let sv = soft.value();
                let mut hard = Matrix::zeros(sv.dim());
                for (r, row) in sv.rows().into_iter().enumerate() {
                    hard[[r, crate::codec::argmax_slice(row.as_slice().unwrap())]] = 1.0;
                }
                let straight = soft.add(tape.constant(hard - &*sv));
                soft_parts.push(soft);
                hard_parts.push(straight);
            }
            ComponentKind::Continuous => {
                let t = seg.tanh();
                soft_parts.push(t);
                hard_parts.push(t);
            }
        }
    }
    Ok(GeneratorOutput {
        soft: Var::concat_cols(&soft_parts),
        hard: Var::concat_cols(&hard_parts),
        logits,
    })
}

/// Critic score (`B × 1`, unbounded) and last hidden features.
pub fn discriminator_forward<'t, R: Rng + ?Sized>(
    disc: &BoundMlp<'t>,
    masks: Var<'t>,
    x: Var<'t>,
    dropout: Option<&mut Dropout<'_, R>>,
) -> (Var<'t>, Var<'t>) {
    disc.forward(Var::concat_cols(&[masks, x]), dropout)
}

/// Column indices of every discrete / continuous encoded dimension.
pub fn dims_by_kind(layout: &ComponentLayout) -> (Rc<Vec<usize>>, Rc<Vec<usize>>) {
    let mut disc = Vec::new();
    let mut cont = Vec::new();
    for c in &layout.components {
        match c.kind {
            ComponentKind::Discrete => disc.extend(c.range()),
            ComponentKind::Continuous => cont.extend(c.range()),
        }
    }
    (Rc::new(disc), Rc::new(cont))
}
