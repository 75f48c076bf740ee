//! Command-line entry point: data preparation, training, evaluation,
//! sweeps, conventional baselines, figures and result merging.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use jssc::dataset::fetch;
use jssc::error::{Error, Result};
use jssc::harness::{
    self, conventional_comm, conventional_sense, evaluate_model, load_results, load_run, now_unix, persist,
    plot::plot, run_sweep, save_run, sweep::value_range, train_meta, train_model, ExperimentConfig, SweepParam,
    SweepSpec,
};
use jssc::training::TrainMode;

#[derive(Parser)]
#[command(name = "jssc", version, about = "Joint sensing and semantic communication experiments")]
struct Cli {
    /// JSON experiment configuration; unspecified keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override any configuration key by dotted path, e.g. `channel.comm_snr_db=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a local dataset source into the binary batch directory.
    FetchData {
        /// Tarball, directory of `.bin` batches, or PNG sprite directory.
        #[arg(long)]
        source: PathBuf,
        /// Output directory (defaults to `data.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model, save the checkpoint and append its test record.
    Train {
        #[command(flatten)]
        keys: ConfigFlags,
        /// Checkpoint directory (defaults to `runs/<config hash>`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "results.jsonl")]
        results: PathBuf,
    },
    /// Evaluate a saved checkpoint under the (possibly overridden) channel settings.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        keys: ConfigFlags,
        #[arg(long, default_value = "results.jsonl")]
        results: PathBuf,
    },
    /// Vary one parameter around the base configuration.
    Sweep {
        /// task_weight_sen, comm_snr_db, sense_snr_db, latent_size, num_ranges or joint_snr_db.
        #[arg(long)]
        param: SweepParam,
        /// Inclusive range start; needs --to and --step.
        #[arg(long, allow_hyphen_values = true, requires_all = ["to", "step"], conflicts_with = "values")]
        from: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        to: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        /// Explicit comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
        /// Train one model per point (default: only for non-SNR parameters).
        #[arg(long, overrides_with = "no_retrain")]
        retrain: bool,
        /// Train the base configuration once and evaluate every point with it.
        #[arg(long)]
        no_retrain: bool,
        #[command(flatten)]
        keys: ConfigFlags,
        #[arg(long, default_value = "results.jsonl")]
        results: PathBuf,
    },
    /// Conventional baselines.
    Baseline {
        #[command(subcommand)]
        which: Baseline,
    },
    /// Draw one line per group from result files (SVG).
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long, value_delimiter = ',')]
        group_by: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Concatenate result files, dropping duplicate records.
    Merge {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Print the effective configuration.
    Config {
        #[command(flatten)]
        keys: ConfigFlags,
    },
}

#[derive(Subcommand)]
enum Baseline {
    /// JPEG 2000 + RS(255,152) + 16-QAM link over a communication SNR range.
    Comm {
        #[arg(long)]
        channel: Option<String>,
        #[arg(long, allow_hyphen_values = true, default_value_t = -10.0)]
        snr_from: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 10.0)]
        snr_to: f64,
        #[arg(long, default_value_t = 1.0)]
        snr_step: f64,
        #[command(flatten)]
        keys: ConfigFlags,
        #[arg(long, default_value = "results.jsonl")]
        results: PathBuf,
    },
    /// Energy detector at one sensing SNR.
    Sense {
        #[arg(long)]
        channel: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
        /// Echo length in complex symbols (defaults to the learned system's).
        #[arg(long)]
        nc: Option<usize>,
        #[command(flatten)]
        keys: ConfigFlags,
        #[arg(long, default_value = "results.jsonl")]
        results: PathBuf,
    },
}

/// Shortcut flags; each one sets the configuration key named in its help.
#[derive(Args, Default)]
struct ConfigFlags {
    /// data.dir
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// data.subset_size (0 keeps every training image)
    #[arg(long)]
    subset_size: Option<usize>,
    /// data.test_size (0 keeps every test image)
    #[arg(long)]
    test_size: Option<usize>,
    /// channel.kind (awgn or rayleigh)
    #[arg(long = "channel-kind")]
    channel_kind: Option<String>,
    /// channel.comm_snr_db
    #[arg(long, allow_hyphen_values = true)]
    comm_snr: Option<f64>,
    /// channel.sense_snr_db
    #[arg(long, allow_hyphen_values = true)]
    sense_snr: Option<f64>,
    /// model.latent_size
    #[arg(long)]
    latent_size: Option<usize>,
    /// model.num_ranges
    #[arg(long)]
    num_ranges: Option<usize>,
    /// train.mode (jsc, jssc, comm_only, sense_only); also resets the task weights to the mode's defaults
    #[arg(long)]
    mode: Option<TrainMode>,
    /// train.seed
    #[arg(long)]
    seed: Option<u64>,
    /// train.epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// train.weights.w_rec
    #[arg(long)]
    w_rec: Option<f64>,
    /// train.weights.w_sen
    #[arg(long)]
    w_sen: Option<f64>,
    /// train.weights.w_sem
    #[arg(long)]
    w_sem: Option<f64>,
    /// eval.seed
    #[arg(long)]
    eval_seed: Option<u64>,
}

impl ConfigFlags {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(d) = &self.data_dir {
            cfg.data.dir = d.clone();
        }
        if let Some(n) = self.subset_size {
            cfg.data.subset_size = (n > 0).then_some(n);
        }
        if let Some(n) = self.test_size {
            cfg.data.test_size = (n > 0).then_some(n);
        }
        if let Some(k) = &self.channel_kind {
            cfg.channel.kind = k.parse()?;
        }
        if let Some(v) = self.comm_snr {
            cfg.channel.comm_snr_db = v;
        }
        if let Some(v) = self.sense_snr {
            cfg.channel.sense_snr_db = v;
        }
        if let Some(v) = self.latent_size {
            cfg.model.latent_size = v;
        }
        if let Some(v) = self.num_ranges {
            cfg.model.num_ranges = v;
        }
        if let Some(m) = self.mode {
            cfg.train.mode = m;
            cfg.train.weights = m.default_weights();
        }
        if let Some(v) = self.seed {
            cfg.train.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.w_rec {
            cfg.train.weights.w_rec = v;
        }
        if let Some(v) = self.w_sen {
            cfg.train.weights.w_sen = v;
        }
        if let Some(v) = self.w_sem {
            cfg.train.weights.w_sem = v;
        }
        if let Some(v) = self.eval_seed {
            cfg.eval.seed = v;
        }
        Ok(())
    }
}

fn base_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(&cli.overrides)?;
    Ok(cfg)
}

fn configured(cli: &Cli, keys: &ConfigFlags) -> Result<ExperimentConfig> {
    let mut cfg = base_config(cli)?;
    keys.apply(&mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}

fn report(records: &[harness::ResultRecord], results: &Path) -> Result<()> {
    persist(records, results)?;
    for r in records {
        println!("{}", serde_json::to_string(r)?);
    }
    info!("appended {} record(s) to {}", records.len(), results.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let now = now_unix();
    match &cli.command {
        Command::FetchData { source, out } => {
            let cfg = base_config(&cli)?;
            let out = out.clone().unwrap_or(cfg.data.dir);
            fetch::prepare(source, &out)?;
            println!("{}", out.display());
        }
        Command::Train { keys, out, results } => {
            let cfg = configured(&cli, keys)?;
            let data = cfg.load_data()?;
            let hash = cfg.config_hash()?;
            let out = out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&hash));
            let mut outcome = train_model(&cfg, &data, |_| {})?;
            save_run(&out, &cfg, &outcome)?;
            info!("checkpoint written to {}", out.display());
            let meta = train_meta(&outcome, &data);
            let rec = evaluate_model(&mut outcome.bundle, &cfg, &cfg, Some(meta), &data, now)?;
            report(&[rec], results)?;
        }
        Command::Eval { checkpoint, keys, results } => {
            let (mut bundle, trained, meta) = load_run(checkpoint)?;
            // Overrides apply on top of the configuration the model was trained with.
            let mut eval_cfg = trained.clone();
            if let Some(p) = &cli.config {
                eval_cfg = ExperimentConfig::from_file(p)?;
                eval_cfg.model = trained.model.clone();
                eval_cfg.train = trained.train.clone();
            }
            eval_cfg.apply_overrides(&cli.overrides)?;
            keys.apply(&mut eval_cfg)?;
            if eval_cfg.model != trained.model || eval_cfg.train != trained.train {
                return Err(Error::Config(
                    "eval cannot change model or training keys; train a new checkpoint instead".into(),
                ));
            }
            eval_cfg.validate()?;
            let data = eval_cfg.load_data()?;
            let rec = evaluate_model(&mut bundle, &trained, &eval_cfg, meta, &data, now)?;
            report(&[rec], results)?;
        }
        Command::Sweep {
            param,
            from,
            to,
            step,
            values,
            retrain,
            no_retrain,
            keys,
            results,
        } => {
            let cfg = configured(&cli, keys)?;
            let values = match (from, to, step) {
                (Some(f), Some(t), Some(s)) => value_range(*f, *t, *s)?,
                _ if !values.is_empty() => values.clone(),
                _ => return Err(Error::Config("sweep needs --from/--to/--step or --values".into())),
            };
            let mut spec = SweepSpec::new(*param, values, cfg);
            spec.retrain_per_point = match (retrain, no_retrain) {
                (true, _) => Some(true),
                (_, true) => Some(false),
                _ => None,
            };
            spec.validate()?;
            let data = spec.base_config.load_data()?;
            let recs = run_sweep(&spec, &data, now, |r| {
                // Each point is written as soon as it exists.
                if let Err(e) = report(std::slice::from_ref(r), results) {
                    log::error!("could not persist point: {e}");
                }
                if let Some(f) = &r.failure {
                    log::warn!("point {} failed: {f}", r.run_id);
                }
            })?;
            let failures = recs.iter().filter(|r| r.is_failed()).count();
            if failures > 0 {
                log::warn!("{failures} of {} points failed", recs.len());
            }
        }
        Command::Baseline { which } => match which {
            Baseline::Comm {
                channel,
                snr_from,
                snr_to,
                snr_step,
                keys,
                results,
            } => {
                let mut cfg = configured(&cli, keys)?;
                if let Some(k) = channel {
                    cfg.channel.kind = k.parse()?;
                }
                let snrs = value_range(*snr_from, *snr_to, *snr_step)?;
                let data = cfg.load_data()?;
                let recs = conventional_comm(&cfg, &snrs, &data, now)?;
                report(&recs, results)?;
            }
            Baseline::Sense {
                channel,
                snr,
                nc,
                keys,
                results,
            } => {
                let mut cfg = configured(&cli, keys)?;
                if let Some(k) = channel {
                    cfg.channel.kind = k.parse()?;
                }
                if let Some(s) = snr {
                    cfg.channel.sense_snr_db = *s;
                }
                let rec = conventional_sense(&cfg, *nc, now)?;
                report(&[rec], results)?;
            }
        },
        Command::Plot {
            results,
            x,
            y,
            group_by,
            out,
        } => {
            let mut records = Vec::new();
            for p in results {
                records.extend(load_results(p)?);
            }
            let groups: Vec<&str> = group_by.iter().map(String::as_str).collect();
            let lines = plot(&records, x, y, &groups, out)?;
            println!("{} ({lines} line(s))", out.display());
        }
        Command::Merge { out, inputs } => {
            let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
            let n = harness::merge(&inputs, out)?;
            println!("{n} record(s) written to {}", out.display());
        }
        Command::Config { keys } => {
            let cfg = configured(&cli, keys)?;
            println!("{}", cfg.to_json_pretty()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
