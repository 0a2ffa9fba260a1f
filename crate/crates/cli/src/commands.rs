//! Subcommands and their exit codes.
//!
//! | code | meaning                                   |
//! |------|-------------------------------------------|
//! | 0    | success                                   |
//! | 1    | any other failure                         |
//! | 2    | missing input file or bad usage           |
//! | 3    | checkpoint checksum mismatch or corrupt   |
//! | 4    | schema mismatch between inputs            |

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use taegan::codec::{infer_schema, read_csv, write_csv, ColumnOverride, RawTable, SchemaOverrides, TableSchema};
use taegan::synthesis::{sample_table_seeded, SynthesisOptions};
use taegan::training::{self, write_history, Ablation, HistoryRecord};
use taegan::TaeganModel;
use taegan_eval::{EvalError, EvalInputs, GbtConfig, MetricReport};
use thiserror::Error;

use crate::checkpoint::{self, CheckpointError};
use crate::config::FileConfig;
use crate::split;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CORRUPT: i32 = 3;
pub const EXIT_SCHEMA: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "taegan", version, about = "Masked auto-encoder GAN for tabular data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a CSV file and write a checkpoint.
    Fit(FitArgs),
    /// Generate rows from a checkpoint.
    Sample(SampleArgs),
    /// Score synthetic rows against real train, validation and test splits.
    Evaluate(EvaluateArgs),
    /// Split a CSV file into seeded random parts.
    Split(SplitArgs),
    /// Train one model per ablation flag.
    Ablate(AblateArgs),
}

/// Input table and column typing shared by training commands.
#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// TOML file of per-column overrides (kind, target, categories).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Name of the target column.
    #[arg(long)]
    pub target: Option<String>,
}

/// Training settings; flags override the config file.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pre_epochs: Option<usize>,
    #[arg(long)]
    pub main_epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Training history as JSON lines; defaults to `<out>.history.jsonl`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Output the assembled hint instead of a last full-mask pass.
    #[arg(long)]
    pub no_final_pass: bool,
    #[arg(long, default_value_t = 500)]
    pub batch_rows: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub real_train: PathBuf,
    #[arg(long)]
    pub real_val: PathBuf,
    #[arg(long)]
    pub real_test: PathBuf,
    #[arg(long)]
    pub synth: PathBuf,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report as JSON here as well as printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "1:1:1")]
    pub ratio: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to the input file's directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Comma-separated flag names; all five when omitted.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    /// Skip training the unmodified reference model.
    #[arg(long)]
    pub skip_baseline: bool,
}

/// Maps an error chain to a documented exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::MissingFile(_) | CliError::Usage(_) => EXIT_USAGE,
                CliError::SchemaMismatch(_) => EXIT_SCHEMA,
            };
        }
        if let Some(e) = cause.downcast_ref::<CheckpointError>() {
            if e.is_integrity() {
                return EXIT_CORRUPT;
            }
        }
        if let Some(EvalError::SchemaMismatch(_)) = cause.downcast_ref::<EvalError>() {
            return EXIT_SCHEMA;
        }
        if let Some(taegan::Error::UnknownOverride(_)) = cause.downcast_ref::<taegan::Error>() {
            return EXIT_SCHEMA;
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            if e.kind() == std::io::ErrorKind::NotFound {
                return EXIT_USAGE;
            }
        }
    }
    EXIT_FAILURE
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Sample(a) => cmd_sample(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Split(a) => cmd_split(&a),
        Command::Ablate(a) => cmd_ablate(&a),
    }
}

fn existing(path: &Path) -> Result<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingFile(path.to_owned()).into())
    }
}

fn read_table(path: &Path) -> Result<RawTable> {
    read_csv(existing(path)?).with_context(|| format!("reading {}", path.display()))
}

fn overrides(schema: Option<&Path>, target: Option<&str>) -> Result<SchemaOverrides> {
    let mut ov = match schema {
        Some(p) => SchemaOverrides::load(existing(p)?).with_context(|| format!("reading {}", p.display()))?,
        None => SchemaOverrides::default(),
    };
    if let Some(t) = target {
        ov.0.entry(t.to_owned()).or_insert_with(ColumnOverride::default).target = Some(true);
    }
    Ok(ov)
}

fn resolve_config(args: &TrainArgs) -> Result<(taegan::TrainConfig, taegan::codec::CodecConfig)> {
    let file = match &args.config {
        Some(p) => FileConfig::load(existing(p)?)?,
        None => FileConfig::default(),
    };
    let flags = FileConfig {
        seed: args.seed,
        pre_epochs: args.pre_epochs,
        main_epochs: args.main_epochs,
        batch: args.batch,
        lr0: args.lr0,
        ..FileConfig::default()
    };
    Ok(file.merge(flags).resolve()?)
}

fn load_training_data(data: &DataArgs, threshold: usize) -> Result<(RawTable, TableSchema)> {
    let table = read_table(&data.data)?;
    let ov = overrides(data.schema.as_deref(), data.target.as_deref())?;
    let schema = infer_schema(&table, &ov, threshold)?;
    Ok((table, schema))
}

fn save_run(model: &TaeganModel, history: &[HistoryRecord], ckpt: &Path, history_path: &Path) -> Result<()> {
    checkpoint::save(model, ckpt).with_context(|| format!("writing {}", ckpt.display()))?;
    let f = File::create(history_path).with_context(|| format!("writing {}", history_path.display()))?;
    write_history(history, BufWriter::new(f))?;
    Ok(())
}

fn history_path_for(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".history.jsonl");
    PathBuf::from(s)
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    let (config, codec_cfg) = resolve_config(&args.train)?;
    let (table, schema) = load_training_data(&args.data, codec_cfg.category_threshold)?;
    info!(
        "fitting on {} rows, {} columns, {} + {} epochs",
        table.len(),
        schema.len(),
        config.pre_epochs,
        config.main_epochs
    );
    let outcome = training::fit_table(&table, &schema, &codec_cfg, &config)?;
    let history = args.history.clone().unwrap_or_else(|| history_path_for(&args.out));
    save_run(&outcome.model, &outcome.history, &args.out, &history)?;
    info!("wrote {}", args.out.display());
    Ok(())
}

pub fn cmd_sample(args: &SampleArgs) -> Result<()> {
    let model = checkpoint::load(existing(&args.model)?).with_context(|| format!("loading {}", args.model.display()))?;
    if args.batch_rows == 0 {
        return Err(CliError::Usage("--batch-rows must be positive".into()).into());
    }
    let opts = SynthesisOptions {
        final_pass: !args.no_final_pass,
        batch_rows: args.batch_rows,
    };
    let table = sample_table_seeded(&model, args.n, &opts, args.seed)?;
    write_csv(&args.out, &table).with_context(|| format!("writing {}", args.out.display()))?;
    info!("wrote {} rows to {}", table.len(), args.out.display());
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let train = read_table(&args.real_train)?;
    let val = read_table(&args.real_val)?;
    let test = read_table(&args.real_test)?;
    let synth = read_table(&args.synth)?;
    let mut expected = train.header.clone();
    expected.sort();
    for (path, t) in [(&args.real_val, &val), (&args.real_test, &test), (&args.synth, &synth)] {
        let mut h = t.header.clone();
        h.sort();
        if h != expected {
            return Err(CliError::SchemaMismatch(format!(
                "{} has columns {:?}, {} has {:?}",
                path.display(),
                t.header,
                args.real_train.display(),
                train.header
            ))
            .into());
        }
    }
    let ov = overrides(args.schema.as_deref(), args.target.as_deref())?;
    let schema = infer_schema(&train, &ov, taegan::codec::DEFAULT_CATEGORY_THRESHOLD)?;
    let inputs = EvalInputs {
        train: &train,
        validation: &val,
        test: &test,
        synth: &synth,
        schema: &schema,
    };
    let report = MetricReport::compute(&inputs, &GbtConfig::default(), args.seed)?;
    let bad = report.out_of_range();
    if !bad.is_empty() {
        anyhow::bail!("scores outside [0, 1]: {bad:?}");
    }
    print!("{}", report.to_table());
    if let Some(out) = &args.out {
        std::fs::write(out, report.to_json()).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

pub fn cmd_split(args: &SplitArgs) -> Result<()> {
    let ratio = split::parse_ratio(&args.ratio).map_err(|e| CliError::Usage(e.to_string()))?;
    let table = read_table(&args.data)?;
    let dir = match &args.out_dir {
        Some(d) => d.clone(),
        None => args.data.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let stem = args.data.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    let parts = split::split_table(&table, &ratio, args.seed);
    for (part, name) in parts.iter().zip(split::part_names(parts.len())) {
        let path = dir.join(format!("{stem}_{name}.csv"));
        write_csv(&path, part).with_context(|| format!("writing {}", path.display()))?;
        info!("wrote {} rows to {}", part.len(), path.display());
    }
    Ok(())
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let (config, codec_cfg) = resolve_config(&args.train)?;
    if config.ablation.any() {
        return Err(CliError::Usage("ablation flags must not be set in the base configuration".into()).into());
    }
    let which: Vec<Ablation> = if args.only.is_empty() {
        Ablation::ALL.to_vec()
    } else {
        args.only
            .iter()
            .map(|n| Ablation::from_name(n).ok_or_else(|| CliError::Usage(format!("unknown ablation {n:?}"))))
            .collect::<Result<_, _>>()?
    };
    let (table, schema) = load_training_data(&args.data, codec_cfg.category_threshold)?;
    let prepared = training::prepare(&table, &schema, &codec_cfg, &config)?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let write = |name: &str, model: &TaeganModel, history: &[HistoryRecord]| -> Result<()> {
        let ckpt = args.out_dir.join(format!("{name}.ckpt"));
        save_run(model, history, &ckpt, &args.out_dir.join(format!("{name}.history.jsonl")))?;
        info!("wrote {}", ckpt.display());
        Ok(())
    };
    if !args.skip_baseline {
        let o = training::train(prepared.codec.clone(), &prepared.encoded, &prepared.weights, &config)?;
        write("full", &o.model, &o.history)?;
    }
    for a in which {
        let mut runs = training::run_ablation(&prepared.codec, &prepared.encoded, &prepared.weights, &config, &[a])?;
        let (_, o) = runs.pop().expect("one run per flag");
        write(a.name(), &o.model, &o.history)?;
    }
    Ok(())
}
