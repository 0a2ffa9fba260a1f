//! Flat TOML configuration file.
//!
//! Every key is optional and overrides one default:
//!
//! ```toml
//! pre_epochs = 90            # epochs without adversarial generator updates
//! main_epochs = 300
//! batch = 500
//! lr0 = 2e-3                 # starting learning rate
//! lr_decay = 0.99            # per-epoch multiplicative decay
//! weight_decay = 1e-5
//! disc_steps = 2
//! adv_steps = 1
//! recon_steps = 2
//! weight_bins = 20           # quantile bins of continuous columns in the weight matrix
//! seed = 0
//!
//! tau = 0.2                  # floor of the mask-size weighting of reconstruction
//! lambda_gp = 10.0
//! lambda_info = 1.0
//! lambda_inter = 1.0
//! lambda_recon = 1.0
//! interaction_cap = 1000000
//! interaction_reduction = "mean_abs"   # or "rmse"
//!
//! hidden_layers = 6
//! hidden_width = 256
//! embedding_dim = 256
//! noise_dim = 128
//! dropout = 0.2
//! gumbel_tau = 0.2
//!
//! t_max = 1.0                # sampling temperature with one known component
//! t_min = 0.2                # sampling temperature with every component known
//!
//! max_modes = 10             # mixture modes per numeric column
//! prune_weight = 0.005
//! category_threshold = 20    # numeric columns with at most this many values are categorical
//!
//! all_main_steps = false
//! disable_interaction_loss = false
//! all_continuous_noise = false
//! uniform_training_sampling = false
//! constant_lr = false
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use taegan::codec::CodecConfig;
use taegan::losses::InteractionReduction;
use taegan::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub pre_epochs: Option<usize>,
    pub main_epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr0: Option<f64>,
    pub lr_decay: Option<f64>,
    pub weight_decay: Option<f64>,
    pub disc_steps: Option<usize>,
    pub adv_steps: Option<usize>,
    pub recon_steps: Option<usize>,
    pub weight_bins: Option<usize>,
    pub seed: Option<u64>,

    pub tau: Option<f64>,
    pub lambda_gp: Option<f64>,
    pub lambda_info: Option<f64>,
    pub lambda_inter: Option<f64>,
    pub lambda_recon: Option<f64>,
    pub interaction_cap: Option<usize>,
    pub interaction_reduction: Option<InteractionReduction>,

    pub hidden_layers: Option<usize>,
    pub hidden_width: Option<usize>,
    pub embedding_dim: Option<usize>,
    pub noise_dim: Option<usize>,
    pub dropout: Option<f64>,
    pub gumbel_tau: Option<f64>,

    pub t_max: Option<f64>,
    pub t_min: Option<f64>,

    pub max_modes: Option<usize>,
    pub prune_weight: Option<f64>,
    pub category_threshold: Option<usize>,

    pub all_main_steps: Option<bool>,
    pub disable_interaction_loss: Option<bool>,
    pub all_continuous_noise: Option<bool>,
    pub uniform_training_sampling: Option<bool>,
    pub constant_lr: Option<bool>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config file {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Invalid(#[from] taegan::Error),
}

macro_rules! set {
    ($src:expr, $dst:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $src.$field { $dst.$field = v; })+
    };
}

macro_rules! replace_set {
    ($src:expr, $dst:expr, $($field:ident),+ $(,)?) => {
        $(if $src.$field.is_some() { $dst.$field = $src.$field; })+
    };
}

impl FileConfig {
    pub fn from_toml(text: &str, path: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        Self::from_toml(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    /// Keys set in `other` replace keys in `self`.
    pub fn merge(self, other: FileConfig) -> FileConfig {
        let mut out = self;
        replace_set!(
            other, out, pre_epochs, main_epochs, batch, lr0, lr_decay, weight_decay, disc_steps, adv_steps,
            recon_steps, weight_bins, seed, tau, lambda_gp, lambda_info, lambda_inter, lambda_recon,
            interaction_cap, hidden_layers, hidden_width, embedding_dim, noise_dim, dropout, gumbel_tau, t_max,
            t_min, max_modes, prune_weight, category_threshold, all_main_steps, disable_interaction_loss,
            all_continuous_noise, uniform_training_sampling, constant_lr, interaction_reduction,
        );
        out
    }

    /// Defaults with every set key applied, validated.
    pub fn resolve(&self) -> Result<(TrainConfig, CodecConfig), ConfigError> {
        let mut train = TrainConfig::default();
        let mut codec = CodecConfig::default();
        set!(
            self, train, pre_epochs, main_epochs, batch, lr0, lr_decay, weight_decay, disc_steps, adv_steps,
            recon_steps, weight_bins, seed,
        );
        set!(self, train.losses, tau, lambda_gp, lambda_info, lambda_inter, lambda_recon, interaction_cap, interaction_reduction);
        set!(self, train.net, hidden_layers, hidden_width, embedding_dim, noise_dim, dropout, gumbel_tau);
        set!(self, train.temperature, t_max, t_min);
        set!(
            self, train.ablation, all_main_steps, disable_interaction_loss, all_continuous_noise,
            uniform_training_sampling, constant_lr,
        );
        set!(self, codec, max_modes, prune_weight, category_threshold);
        train.validate()?;
        Ok((train, codec))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let (t, c) = FileConfig::from_toml("", "x").unwrap().resolve().unwrap();
        assert_eq!(t, TrainConfig::default());
        assert_eq!(c, CodecConfig::default());
    }

    #[test]
    fn keys_map_to_nested_fields() {
        let text = "batch = 64\nlambda_gp = 5.0\nhidden_width = 32\nt_min = 0.1\nmax_modes = 3\nconstant_lr = true\ninteraction_reduction = \"rmse\"\n";
        let (t, c) = FileConfig::from_toml(text, "x").unwrap().resolve().unwrap();
        assert_eq!(t.batch, 64);
        assert_eq!(t.losses.lambda_gp, 5.0);
        assert_eq!(t.losses.interaction_reduction, InteractionReduction::Rmse);
        assert_eq!(t.net.hidden_width, 32);
        assert_eq!(t.temperature.t_min, 0.1);
        assert!(t.ablation.constant_lr);
        assert_eq!(c.max_modes, 3);
    }

    #[test]
    fn later_layer_wins() {
        let file = FileConfig::from_toml("seed = 1\nbatch = 10", "x").unwrap();
        let flags = FileConfig {
            seed: Some(9),
            ..Default::default()
        };
        let merged = file.merge(flags);
        assert_eq!((merged.seed, merged.batch), (Some(9), Some(10)));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(matches!(FileConfig::from_toml("bacth = 3", "x"), Err(ConfigError::Parse { .. })));
        let odd = FileConfig::from_toml("noise_dim = 3", "x").unwrap();
        assert!(matches!(odd.resolve(), Err(ConfigError::Invalid(_))));
    }
}
