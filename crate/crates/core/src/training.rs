//! Two-phase training: reconstruction and critic updates from the first
//! epoch, adversarial generator updates once pre-training is over.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Matrix, Tape, Var};
use crate::codec::{CodecConfig, EncodedTable, RawTable, TableCodec, TableSchema};
use crate::error::{Error, Result};
use crate::losses::{self, InteractionPairs, LossWeights};
use crate::masking::{self, WeightMatrix};
use crate::model::{HintMarginals, TaeganModel};
use crate::nets::{
    self, discriminator_forward, generator_forward, DiscriminatorParams, Dropout, GeneratorInput,
    GeneratorParams, NetConfig, NoiseSpec,
};
use crate::optim::AdamW;
use crate::synthesis::{temperature, TemperatureSchedule};

/// Single-change variants of the training procedure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// Every epoch runs all three step kinds; no pre-training phase.
    pub all_main_steps: bool,
    pub disable_interaction_loss: bool,
    /// Every noise dimension is Gaussian.
    pub all_continuous_noise: bool,
    /// Rows are drawn uniformly instead of through the weight matrix.
    pub uniform_training_sampling: bool,
    pub constant_lr: bool,
}

/// One named ablation flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    AllMainSteps,
    DisableInteractionLoss,
    AllContinuousNoise,
    UniformTrainingSampling,
    ConstantLr,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::AllMainSteps,
        Ablation::DisableInteractionLoss,
        Ablation::AllContinuousNoise,
        Ablation::UniformTrainingSampling,
        Ablation::ConstantLr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::AllMainSteps => "all_main_steps",
            Ablation::DisableInteractionLoss => "disable_interaction_loss",
            Ablation::AllContinuousNoise => "all_continuous_noise",
            Ablation::UniformTrainingSampling => "uniform_training_sampling",
            Ablation::ConstantLr => "constant_lr",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    pub fn apply(self, flags: &mut AblationFlags) {
        match self {
            Ablation::AllMainSteps => flags.all_main_steps = true,
            Ablation::DisableInteractionLoss => flags.disable_interaction_loss = true,
            Ablation::AllContinuousNoise => flags.all_continuous_noise = true,
            Ablation::UniformTrainingSampling => flags.uniform_training_sampling = true,
            Ablation::ConstantLr => flags.constant_lr = true,
        }
    }
}

impl AblationFlags {
    pub fn any(&self) -> bool {
        *self != AblationFlags::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub pre_epochs: usize,
    pub main_epochs: usize,
    pub batch: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub disc_steps: usize,
    pub adv_steps: usize,
    pub recon_steps: usize,
    /// Quantile bins for continuous components of the weight matrix.
    pub weight_bins: usize,
    pub seed: u64,
    pub losses: LossWeights,
    pub net: NetConfig,
    pub temperature: TemperatureSchedule,
    pub ablation: AblationFlags,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pre_epochs: 90,
            main_epochs: 300,
            batch: 500,
            lr0: 2e-3,
            lr_decay: 0.99,
            weight_decay: 1e-5,
            disc_steps: 2,
            adv_steps: 1,
            recon_steps: 2,
            weight_bins: 20,
            seed: 0,
            losses: LossWeights::default(),
            net: NetConfig::default(),
            temperature: TemperatureSchedule::default(),
            ablation: AblationFlags::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch < 2 {
            return Err(Error::BatchTooSmall { need: 2, got: self.batch });
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("lr0 {} must be positive", self.lr0)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay {} outside (0, 1]", self.lr_decay)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.weight_bins == 0 {
            return Err(Error::Config("weight_bins must be positive".into()));
        }
        self.losses.validate()?;
        self.net.validate()?;
        self.temperature.validate()
    }

    /// `(pre-training epochs, total epochs)` after applying ablation flags.
    pub fn epoch_plan(&self) -> (usize, usize) {
        let total = self.pre_epochs + self.main_epochs;
        if self.ablation.all_main_steps {
            (0, total)
        } else {
            (self.pre_epochs, total)
        }
    }
}

/// Learning rate for 1-based `epoch`.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    if config.ablation.constant_lr {
        config.lr0
    } else {
        config.lr0 * config.lr_decay.powi(epoch.saturating_sub(1) as i32)
    }
}

/// One line of the training history, written per iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub epoch: usize,
    pub iter: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub recon: f64,
    pub info: f64,
    pub inter: f64,
    pub gp: f64,
    pub lr: f64,
    pub disc_steps: usize,
    pub adv_steps: usize,
    pub recon_steps: usize,
    /// Mean and variance of the second half of the noise dimensions drawn
    /// during this iteration.
    pub noise_tail_mean: f64,
    pub noise_tail_var: f64,
    /// Largest single-row selection probability of the last sampled mask.
    pub max_row_prob: f64,
}

pub fn write_history<W: Write>(records: &[HistoryRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub struct TrainOutcome {
    pub model: TaeganModel,
    pub history: Vec<HistoryRecord>,
}

/// Fitted codec, encoded rows and weight matrix for one raw table.
pub struct Prepared {
    pub codec: TableCodec,
    pub encoded: EncodedTable,
    pub weights: WeightMatrix,
}

/// Fits the codec, encodes the table and builds the weight matrix.
pub fn prepare(raw: &RawTable, schema: &TableSchema, codec_cfg: &CodecConfig, config: &TrainConfig) -> Result<Prepared> {
    let codec = TableCodec::fit(schema, raw, codec_cfg)?;
    let encoded = codec.encode_table(raw, config.seed)?;
    let numeric = codec.numeric_values(raw)?;
    let weights = masking::build_weight_matrix(&encoded, &numeric, config.weight_bins);
    Ok(Prepared {
        codec,
        encoded,
        weights,
    })
}

/// [`prepare`] followed by [`train`].
pub fn fit_table(raw: &RawTable, schema: &TableSchema, codec_cfg: &CodecConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    let p = prepare(raw, schema, codec_cfg, config)?;
    train(p.codec, &p.encoded, &p.weights, config)
}

struct Batch {
    masks: Matrix,
    real: Matrix,
    hints: Matrix,
    noise: Matrix,
    temps: Vec<f64>,
    rows: Vec<usize>,
    max_row_prob: f64,
}

#[derive(Default)]
struct NoiseTally {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

struct Trainer<'a> {
    table: &'a EncodedTable,
    weights: WeightMatrix,
    cfg: &'a TrainConfig,
    noise: NoiseSpec,
    pairs: Option<InteractionPairs>,
    sample_rng: ChaCha8Rng,
    drop_rng: ChaCha8Rng,
    tally: NoiseTally,
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn grads_of(tape: &Tape, loss: Var<'_>, vars: &[Var<'_>]) -> Vec<Matrix> {
    tape.grad(loss, vars).into_iter().map(|g| (*g.value()).clone()).collect()
}

impl Trainer<'_> {
    fn batch(&mut self) -> Result<Batch> {
        let b = self.cfg.batch;
        let layout = &self.table.layout;
        let d_m = layout.n_components();
        let mut masks = Matrix::zeros((b, d_m));
        let mut real = Matrix::zeros((b, layout.dim()));
        let mut rows = Vec::with_capacity(b);
        let mut temps = Vec::with_capacity(b);
        let mut last_mask = None;
        for r in 0..b {
            let m = masking::sample_mask(d_m, &mut self.sample_rng);
            let idx = self.weights.sample_row(&m, &mut self.sample_rng);
            for c in m.selected() {
                masks[[r, c]] = 1.0;
            }
            real.row_mut(r).assign(&self.table.data.row(idx));
            temps.push(temperature(m.count(), d_m, &self.cfg.temperature)?);
            rows.push(idx);
            last_mask = Some(m);
        }
        let max_row_prob = last_mask
            .map(|m| self.weights.row_weights(&m).into_iter().fold(0.0, f64::max))
            .unwrap_or(0.0);
        let mu = masking::expand_mask_batch(&masks, layout);
        let hints = &mu * &real;
        let noise = nets::sample_noise_batch(&self.noise, b, &mut self.sample_rng)?;
        let tail = self.noise.dim / 2;
        for v in noise.slice(ndarray::s![.., tail..]) {
            self.tally.n += 1.0;
            self.tally.sum += v;
            self.tally.sum_sq += v * v;
        }
        Ok(Batch {
            masks,
            real,
            hints,
            noise,
            temps,
            rows,
            max_row_prob,
        })
    }

    fn input<'b>(batch: &'b Batch) -> GeneratorInput<'b> {
        GeneratorInput {
            masks: &batch.masks,
            hints: &batch.hints,
            noise: &batch.noise,
            temperature: &batch.temps,
        }
    }
}

fn check_finite(
    value: f64,
    loss: &'static str,
    epoch: usize,
    iter: usize,
    gen: &GeneratorParams,
    disc: &DiscriminatorParams,
    rows: &[usize],
) -> Result<()> {
    if value.is_finite() {
        return Ok(());
    }
    let mut names = gen.param_names();
    names.extend(disc.param_names());
    let mut params = gen.params();
    params.extend(disc.params());
    let param_norms = names
        .into_iter()
        .zip(params)
        .map(|(n, p)| (n, p.iter().map(|v| v * v).sum::<f64>().sqrt()))
        .collect();
    Err(Error::NonFinite {
        loss,
        epoch,
        iter,
        param_norms,
        batch_rows: rows.to_vec(),
    })
}

/// Trains a model on an encoded table.
///
/// `weights` drives row selection unless uniform sampling is requested.
pub fn train(codec: TableCodec, table: &EncodedTable, weights: &WeightMatrix, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let m_rows = table.data.nrows();
    if m_rows == 0 {
        return Err(Error::EmptyTable);
    }
    let layout = &table.layout;
    if table.data.ncols() != layout.dim() {
        return Err(Error::DimensionMismatch {
            expected: layout.dim(),
            found: table.data.ncols(),
        });
    }
    if weights.rows() != m_rows || weights.n_components() != layout.n_components() {
        return Err(Error::DimensionMismatch {
            expected: m_rows,
            found: weights.rows(),
        });
    }

    let mut init_rng = stream(config.seed, 0);
    let mut gen = GeneratorParams::init(layout, &config.net, &mut init_rng);
    let mut disc = DiscriminatorParams::init(layout, &config.net, &mut init_rng);
    let mut g_opt = AdamW::new(&gen.params(), config.weight_decay);
    let mut d_opt = AdamW::new(&disc.params(), config.weight_decay);

    let use_interaction = !config.ablation.disable_interaction_loss
        && losses::interaction_len(layout) <= config.losses.interaction_cap
        && config.losses.lambda_inter > 0.0;
    if !use_interaction && !config.ablation.disable_interaction_loss {
        log::warn!("interaction loss skipped: factor length exceeds cap");
    }
    let mut trainer = Trainer {
        table,
        weights: if config.ablation.uniform_training_sampling {
            WeightMatrix::uniform(m_rows, layout.n_components())
        } else {
            weights.clone()
        },
        cfg: config,
        noise: NoiseSpec {
            dim: config.net.noise_dim,
            all_gaussian: config.ablation.all_continuous_noise,
        },
        pairs: use_interaction.then(|| InteractionPairs::new(layout)),
        sample_rng: stream(config.seed, 1),
        drop_rng: stream(config.seed, 2),
        tally: NoiseTally::default(),
    };

    let (pre, total) = config.epoch_plan();
    let iters = m_rows.div_ceil(config.batch);
    let mut history = Vec::with_capacity(total * iters);
    let w = &config.losses;
    for epoch in 1..=total {
        let lr = lr_at(epoch, config);
        for iter in 1..=iters {
            trainer.tally = NoiseTally::default();
            let mut rec = HistoryRecord {
                epoch,
                iter,
                d_loss: 0.0,
                g_loss: 0.0,
                recon: 0.0,
                info: 0.0,
                inter: 0.0,
                gp: 0.0,
                lr,
                disc_steps: 0,
                adv_steps: 0,
                recon_steps: 0,
                noise_tail_mean: 0.0,
                noise_tail_var: 0.0,
                max_row_prob: 0.0,
            };

            for _ in 0..config.recon_steps {
                let batch = trainer.batch()?;
                rec.max_row_prob = batch.max_row_prob;
                let tape = Tape::new();
                let g = gen.bind(&tape, true);
                let out = generator_forward(&g, &tape, layout, &config.net, &Trainer::input(&batch), &mut trainer.drop_rng, true)?;
                let recon = losses::reconstruction_loss(out.soft, out.logits, &batch.real, &batch.masks, layout, w.tau)?;
                let mut loss = recon.scale(w.lambda_recon);
                let mut inter_v = 0.0;
                if let Some(pairs) = &trainer.pairs {
                    let inter = losses::interaction_loss(tape.constant(batch.real.clone()), out.soft, pairs, w.interaction_reduction)?;
                    inter_v = inter.item();
                    loss = loss.add(inter.scale(w.lambda_inter));
                }
                check_finite(loss.item(), "reconstruction", epoch, iter, &gen, &disc, &batch.rows)?;
                let grads = grads_of(&tape, loss, &g.vars());
                g_opt.step(gen.params_mut(), &grads, lr);
                rec.recon = recon.item();
                rec.inter = inter_v;
                rec.recon_steps += 1;
            }

            for _ in 0..config.disc_steps {
                let batch = trainer.batch()?;
                let tape = Tape::new();
                let g = gen.bind(&tape, false);
                let out = generator_forward(&g, &tape, layout, &config.net, &Trainer::input(&batch), &mut trainer.drop_rng, true)?;
                let fake = (*out.hard.value()).clone();
                let d = disc.bind(&tape, true);
                let masks = tape.constant(batch.masks.clone());
                let mut dropout = Dropout {
                    rate: config.net.dropout,
                    rng: &mut trainer.drop_rng,
                };
                let (score_real, _) = discriminator_forward(&d, masks, tape.constant(batch.real.clone()), Some(&mut dropout));
                let (score_fake, _) = discriminator_forward(&d, masks, tape.constant(fake.clone()), Some(&mut dropout));
                let (d_loss, _) = losses::wasserstein_losses(score_real, score_fake);
                let gp = losses::gradient_penalty(
                    &tape,
                    |x| discriminator_forward(&d, masks, x, Some(&mut dropout)).0,
                    &batch.real,
                    &fake,
                    w.lambda_gp,
                    &mut trainer.sample_rng,
                )?;
                let loss = d_loss.add(gp);
                check_finite(loss.item(), "discriminator", epoch, iter, &gen, &disc, &batch.rows)?;
                let grads = grads_of(&tape, loss, &d.vars);
                d_opt.step(disc.params_mut(), &grads, lr);
                rec.d_loss = d_loss.item();
                rec.gp = gp.item();
                rec.disc_steps += 1;
            }

            if epoch > pre {
                for _ in 0..config.adv_steps {
                    let batch = trainer.batch()?;
                    let tape = Tape::new();
                    let g = gen.bind(&tape, true);
                    let out = generator_forward(&g, &tape, layout, &config.net, &Trainer::input(&batch), &mut trainer.drop_rng, true)?;
                    let d = disc.bind(&tape, false);
                    let masks = tape.constant(batch.masks.clone());
                    let mut dropout = Dropout {
                        rate: config.net.dropout,
                        rng: &mut trainer.drop_rng,
                    };
                    let (_, feat_real) = discriminator_forward(&d, masks, tape.constant(batch.real.clone()), Some(&mut dropout));
                    let (score_fake, feat_fake) = discriminator_forward(&d, masks, out.hard, Some(&mut dropout));
                    let g_loss = score_fake.mean().neg();
                    let info = losses::information_loss(feat_real.detach(), feat_fake)?;
                    let loss = g_loss.add(info.scale(w.lambda_info));
                    check_finite(loss.item(), "generator", epoch, iter, &gen, &disc, &batch.rows)?;
                    let grads = grads_of(&tape, loss, &g.vars());
                    g_opt.step(gen.params_mut(), &grads, lr);
                    rec.g_loss = g_loss.item();
                    rec.info = info.item();
                    rec.adv_steps += 1;
                }
            }

            let t = &trainer.tally;
            if t.n > 0.0 {
                rec.noise_tail_mean = t.sum / t.n;
                rec.noise_tail_var = t.sum_sq / t.n - rec.noise_tail_mean.powi(2);
            }
            log::debug!(
                "epoch {epoch} iter {iter}: d {:.4} g {:.4} recon {:.4} inter {:.4}",
                rec.d_loss,
                rec.g_loss,
                rec.recon,
                rec.inter
            );
            history.push(rec);
        }
        log::info!("epoch {epoch}/{total} done");
    }

    let model = TaeganModel {
        hint_marginals: HintMarginals::from_table(table),
        codec,
        config: config.clone(),
        generator: gen,
        discriminator: disc,
        epochs_trained: total,
    };
    Ok(TrainOutcome { model, history })
}

/// Trains one model per requested ablation, each with exactly that flag set
/// on top of `base`.
pub fn run_ablation(
    codec: &TableCodec,
    table: &EncodedTable,
    weights: &WeightMatrix,
    base: &TrainConfig,
    which: &[Ablation],
) -> Result<Vec<(Ablation, TrainOutcome)>> {
    if base.ablation.any() {
        return Err(Error::Config(
            "ablation runs start from a configuration with no ablation flags set".into(),
        ));
    }
    let mut seen = Vec::new();
    for a in which {
        if seen.contains(a) {
            return Err(Error::Config(format!("ablation {} requested twice", a.name())));
        }
        seen.push(*a);
    }
    which
        .iter()
        .map(|&a| {
            let mut cfg = base.clone();
            a.apply(&mut cfg.ablation);
            train(codec.clone(), table, weights, &cfg).map(|o| (a, o))
        })
        .collect()
}
