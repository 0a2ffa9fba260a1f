use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taegan::autograd::{Matrix, Tape};
use taegan::codec::{infer_schema, ColumnKind, CodecConfig, RawTable, SchemaOverrides, DEFAULT_CATEGORY_THRESHOLD};
use taegan::losses::reconstruction_loss;
use taegan::masking::{expand_mask_batch, sample_mask};
use taegan::nets::{generator_forward, sample_noise_batch, GeneratorInput, NetConfig, NoiseSpec};
use taegan::synthesis::{sample_encoded, sample_table, SynthesisOptions};
use taegan::training::{fit_table, lr_at, prepare, run_ablation, train, Ablation, TrainConfig};
use taegan::{Error, TaeganModel};

fn toy_table(rows: usize) -> RawTable {
    let header = vec!["colour".to_string(), "shape".to_string(), "size".to_string()];
    let body = (0..rows)
        .map(|i| {
            let k = i % 3;
            vec![
                ["red", "green", "blue"][k].to_string(),
                ["circle", "square", "star"][k].to_string(),
                format!("{}", (k as f64) * 10.0 + (i % 7) as f64 * 0.5),
            ]
        })
        .collect();
    RawTable::new(header, body).unwrap()
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        pre_epochs: 1,
        main_epochs: 0,
        batch: 20,
        seed: 7,
        net: NetConfig {
            hidden_layers: 2,
            hidden_width: 24,
            embedding_dim: 12,
            noise_dim: 8,
            dropout: 0.0,
            gumbel_tau: 0.2,
        },
        ..TrainConfig::default()
    }
}

fn fit(raw: &RawTable, cfg: &TrainConfig) -> taegan::training::TrainOutcome {
    let schema = infer_schema(raw, &SchemaOverrides::default(), DEFAULT_CATEGORY_THRESHOLD).unwrap();
    fit_table(raw, &schema, &CodecConfig::default(), cfg).unwrap()
}

/// Reconstruction loss of `model` on a fixed batch with dropout disabled.
fn eval_recon(model: &TaeganModel, data: &Matrix) -> f64 {
    let layout = model.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let rows = data.nrows();
    let mut masks = Matrix::zeros((rows, layout.n_components()));
    for r in 0..rows {
        for c in sample_mask(layout.n_components(), &mut rng).selected() {
            masks[[r, c]] = 1.0;
        }
    }
    let hints = &expand_mask_batch(&masks, layout) * data;
    let noise = sample_noise_batch(&NoiseSpec::new(model.config.net.noise_dim).unwrap(), rows, &mut rng).unwrap();
    let temps = vec![1.0; rows];
    let tape = Tape::new();
    let g = model.generator.bind(&tape, false);
    let input = GeneratorInput {
        masks: &masks,
        hints: &hints,
        noise: &noise,
        temperature: &temps,
    };
    let out = generator_forward(&g, &tape, layout, &model.config.net, &input, &mut rng, false).unwrap();
    reconstruction_loss(out.soft, out.logits, data, &masks, layout, 0.2).unwrap().item()
}

#[test]
fn one_pretraining_epoch_reduces_reconstruction_loss() {
    let raw = toy_table(100);
    let schema = infer_schema(&raw, &SchemaOverrides::default(), DEFAULT_CATEGORY_THRESHOLD).unwrap();
    let cfg = tiny_config();
    let p = prepare(&raw, &schema, &CodecConfig::default(), &cfg).unwrap();
    let untrained = train(
        p.codec.clone(),
        &p.encoded,
        &p.weights,
        &TrainConfig {
            pre_epochs: 0,
            ..cfg.clone()
        },
    )
    .unwrap();
    let trained = train(p.codec, &p.encoded, &p.weights, &cfg).unwrap();
    let before = eval_recon(&untrained.model, &p.encoded.data);
    let after = eval_recon(&trained.model, &p.encoded.data);
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn pretraining_has_no_adversarial_updates_and_step_ratio_holds() {
    let raw = toy_table(60);
    let cfg = TrainConfig {
        pre_epochs: 2,
        main_epochs: 1,
        ..tiny_config()
    };
    let out = fit(&raw, &cfg);
    assert_eq!(out.history.len(), 3 * 3);
    for r in &out.history {
        assert_eq!((r.disc_steps, r.recon_steps), (2, 2));
        if r.epoch <= 2 {
            assert_eq!(r.adv_steps, 0);
            assert_eq!((r.g_loss, r.info), (0.0, 0.0));
        } else {
            assert_eq!(r.adv_steps, 1);
        }
    }
}

#[test]
fn training_is_deterministic() {
    let raw = toy_table(40);
    let cfg = TrainConfig {
        main_epochs: 1,
        ..tiny_config()
    };
    let a = fit(&raw, &cfg);
    let b = fit(&raw, &cfg);
    assert_eq!(a.history, b.history);
    assert_eq!(a.model.generator, b.model.generator);
    assert_eq!(a.model.discriminator, b.model.discriminator);
}

#[test]
fn weight_decay_reaches_the_parameters() {
    let raw = toy_table(40);
    let a = fit(&raw, &tiny_config());
    let b = fit(
        &raw,
        &TrainConfig {
            weight_decay: 0.0,
            ..tiny_config()
        },
    );
    assert_ne!(a.model.generator, b.model.generator);
}

#[test]
fn learning_rate_schedule() {
    let cfg = TrainConfig::default();
    assert_eq!(lr_at(1, &cfg), 2e-3);
    assert!((lr_at(2, &cfg) - 1.98e-3).abs() < 1e-15);
    let flat = TrainConfig {
        lr_decay: 1.0,
        ..TrainConfig::default()
    };
    assert_eq!(lr_at(50, &flat), 2e-3);
}

#[test]
fn ablation_flags_show_up_in_history() {
    let raw = toy_table(40);
    let schema = infer_schema(&raw, &SchemaOverrides::default(), DEFAULT_CATEGORY_THRESHOLD).unwrap();
    let cfg = TrainConfig {
        pre_epochs: 1,
        main_epochs: 2,
        ..tiny_config()
    };
    let p = prepare(&raw, &schema, &CodecConfig::default(), &cfg).unwrap();
    let runs = run_ablation(&p.codec, &p.encoded, &p.weights, &cfg, &Ablation::ALL).unwrap();
    for (a, out) in &runs {
        let h = &out.history;
        match a {
            Ablation::AllMainSteps => assert!(h.iter().all(|r| r.adv_steps == 1)),
            Ablation::DisableInteractionLoss => assert!(h.iter().all(|r| r.inter == 0.0)),
            Ablation::AllContinuousNoise => {
                let var = h.iter().map(|r| r.noise_tail_var).sum::<f64>() / h.len() as f64;
                assert!((var - 1.0).abs() < 0.2, "{var}");
            }
            Ablation::UniformTrainingSampling => {
                assert!(h.iter().all(|r| (r.max_row_prob - 1.0 / 40.0).abs() < 1e-12))
            }
            Ablation::ConstantLr => assert!(h.iter().all(|r| r.lr == cfg.lr0)),
        }
    }
    let base = fit(&raw, &cfg).history;
    assert!(base.iter().any(|r| r.inter > 0.0));
    assert!(base.iter().all(|r| (r.noise_tail_var - 0.25).abs() < 0.1));
    assert!(base.iter().any(|r| r.lr < cfg.lr0));

    let mut contradictory = cfg.clone();
    contradictory.ablation.constant_lr = true;
    assert!(run_ablation(&p.codec, &p.encoded, &p.weights, &contradictory, &[Ablation::AllMainSteps]).is_err());
}

#[test]
fn sampling_produces_schema_valid_rows_deterministically() {
    let raw = toy_table(60);
    let out = fit(&raw, &tiny_config());
    let opts = SynthesisOptions::default();
    let a = sample_table(&out.model, 300, &opts, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = sample_table(&out.model, 300, &opts, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 300);
    let schema = &out.model.codec.schema;
    for row in &a.rows {
        for (cell, meta) in row.iter().zip(&schema.columns) {
            match meta.kind {
                ColumnKind::Categorical => assert!(meta.categories.contains(cell), "{cell}"),
                ColumnKind::Numeric => assert!(cell.parse::<f64>().unwrap().is_finite()),
            }
        }
    }
    let c = sample_table(&out.model, 300, &opts, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn generation_grows_mask_one_component_per_pass() {
    let raw = toy_table(60);
    let out = fit(&raw, &tiny_config());
    let d_m = out.model.layout().n_components();
    let mut seen = Vec::new();
    let mut obs = |s: &taegan::synthesis::GenerationStep<'_>| {
        for row in s.masks.rows() {
            assert_eq!(row.sum() as usize, s.known);
        }
        seen.push(s.known);
    };
    sample_encoded(&out.model, 10, &SynthesisOptions::default(), &mut ChaCha8Rng::seed_from_u64(3), Some(&mut obs)).unwrap();
    assert_eq!(seen, (1..=d_m).collect::<Vec<_>>());
}

#[test]
fn untrained_and_zero_row_requests_are_rejected() {
    let raw = toy_table(20);
    let trained = fit(&raw, &tiny_config());
    let untrained = fit(
        &raw,
        &TrainConfig {
            pre_epochs: 0,
            ..tiny_config()
        },
    );
    let opts = SynthesisOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(sample_table(&untrained.model, 5, &opts, &mut rng), Err(Error::Untrained)));
    assert!(matches!(sample_table(&trained.model, 0, &opts, &mut rng), Err(Error::ZeroRows)));
}

#[test]
fn single_component_table_uses_one_pass() {
    let rows = (0..30).map(|i| vec![["a", "b"][i % 2].to_string()]).collect();
    let raw = RawTable::new(vec!["only".into()], rows).unwrap();
    let out = fit(&raw, &tiny_config());
    let mut passes = 0;
    let mut obs = |_: &taegan::synthesis::GenerationStep<'_>| passes += 1;
    sample_encoded(&out.model, 4, &SynthesisOptions::default(), &mut ChaCha8Rng::seed_from_u64(3), Some(&mut obs)).unwrap();
    assert_eq!(passes, 1);
}
