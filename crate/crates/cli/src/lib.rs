//! Command-line front end: configuration, on-disk formats and the
//! generate → train → evaluate → characterize pipelines.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use qude_core::dynamics::BaseKind;
use qude_core::metrics::SplitTag;
use qude_core::models::AnsatzKind;
use qude_core::train::TrainMode;

pub use config::RunConfig;
pub use error::{CliError, Result};

/// Training horizon used when neither the configuration nor the data records one.
pub const DEFAULT_TRAIN_HORIZON_US: f64 = 10.0;

/// Environment variable that takes precedence over `--threads`.
pub const THREADS_ENV: &str = "QUDE_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "qude",
    version,
    about = "Learn latent qubit dynamics from tomography data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the planted twin and write a dataset.
    Generate,
    /// Fit a source model to a dataset.
    Train,
    /// Compare a model (or `--model base`) with a dataset.
    Evaluate,
    /// Print the interpretable readout of a structure-preserving model.
    Characterize,
    /// Run generate, train, evaluate and characterize end to end.
    Report,
}

#[derive(Debug, Default, Clone, clap::Args)]
pub struct Options {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset manifest, directory holding one, or a bare JSONL file.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Model file, or `base` for the base model alone.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; QUDE_THREADS takes precedence.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_parser = parse_ansatz)]
    pub ansatz: Option<AnsatzKind>,
    #[arg(long, global = true, value_parser = parse_base)]
    pub base: Option<BaseKind>,
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<TrainMode>,
    /// Experiment id for exp-spec training.
    #[arg(long, global = true)]
    pub experiment: Option<String>,
    #[arg(long = "train-horizon-us", global = true)]
    pub train_horizon_us: Option<f64>,
}

fn parse_ansatz(s: &str) -> std::result::Result<AnsatzKind, String> {
    s.parse().map_err(|e: qude_core::Error| e.to_string())
}

fn parse_base(s: &str) -> std::result::Result<BaseKind, String> {
    s.parse().map_err(|e: qude_core::Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<TrainMode, String> {
    s.parse().map_err(|e: qude_core::Error| e.to_string())
}

impl Options {
    /// Loads the configuration (defaults without `--config`) and applies the flags.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.experiments.seed = s;
            cfg.training.seed = s;
        }
        if let Some(a) = self.ansatz {
            cfg.training.ansatz = a;
            cfg.report.ansatze = vec![a];
        }
        if let Some(b) = self.base {
            cfg.training.base_model = Some(b);
        }
        if let Some(m) = self.mode {
            cfg.training.mode = m;
        }
        if let Some(e) = &self.experiment {
            cfg.training.experiment = Some(e.clone());
        }
        if let Some(h) = self.train_horizon_us {
            cfg.training.train_horizon_us = Some(h);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// QUDE_THREADS first, then `--threads`.
    pub fn thread_count(&self) -> Result<Option<usize>> {
        match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .map(Some)
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "{THREADS_ENV} must be a positive integer, got '{v}'"
                    ))
                }),
            Err(_) => match self.threads {
                Some(0) => Err(CliError::Config("--threads must be positive".into())),
                t => Ok(t),
            },
        }
    }
}

fn required<'a, T>(v: &'a Option<T>, flag: &str, verb: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| CliError::Config(format!("{verb} needs {flag}")))
}

fn fmt_estimate(e: Option<&qude_core::metrics::McEstimate>) -> String {
    e.map_or("n/a".to_string(), |e| {
        format!("{:.5} ± {:.5}", e.mean, e.std_err)
    })
}

/// Runs one command, printing a short summary to stdout.
pub fn execute(command: &Command, opts: &Options) -> Result<()> {
    let cfg = opts.resolve_config()?;
    let root = opts
        .out
        .clone()
        .unwrap_or_else(|| cfg.output.directory.clone());
    match command {
        Command::Generate => {
            let out = opts.out.clone().unwrap_or_else(|| root.join("dataset"));
            let m = commands::generate(&cfg, &out)?;
            let records: usize = m.experiments.iter().map(|e| e.records).sum();
            println!(
                "wrote {} experiments ({records} records) to {}",
                m.experiments.len(),
                out.display()
            );
        }
        Command::Train => {
            let dataset = required(&opts.dataset, "--dataset", "train")?;
            let out = opts
                .out
                .clone()
                .unwrap_or_else(|| root.join("models").join(cfg.training.ansatz.as_str()));
            let t = commands::train(&cfg, dataset, &out)?;
            let info = &t.model.training;
            println!(
                "{} ({}, {} parameters): train loss {:.6e}, validation loss {:.6e}, {:.1} s",
                t.model.ansatz.kind.as_str(),
                info.mode.as_str(),
                t.model.params.len(),
                info.final_loss,
                info.validation_loss,
                t.wall_time_s
            );
            println!("model written to {}", out.join("model.json").display());
        }
        Command::Evaluate => {
            let dataset = required(&opts.dataset, "--dataset", "evaluate")?;
            let model = commands::ModelChoice::parse(required(&opts.model, "--model", "evaluate")?);
            let out = opts.out.clone().unwrap_or_else(|| root.join("eval"));
            let ev = commands::evaluate(&cfg, dataset, &model, &out)?;
            let s = &ev.summary;
            println!("model {} on {} base", s.model, s.base_model);
            for split in [SplitTag::Interpolation, SplitTag::Extrapolation] {
                println!(
                    "  {:<14} E[D] = {}",
                    split.as_str(),
                    fmt_estimate(s.estimate(split))
                );
            }
        }
        Command::Characterize => {
            let model = PathBuf::from(required(&opts.model, "--model", "characterize")?);
            let out = opts
                .out
                .clone()
                .unwrap_or_else(|| model.parent().map(Path::to_path_buf).unwrap_or_default());
            let c = commands::characterize(&cfg, &model, &out)?;
            print!("{}", c.render());
        }
        Command::Report => {
            let r = commands::report(&cfg, &root)?;
            println!(
                "{:<16} {:>22} {:>22}",
                "model", "interpolation", "extrapolation"
            );
            for e in &r.models {
                println!(
                    "{:<16} {:>22} {:>22}",
                    e.model,
                    fmt_estimate(e.interpolation.as_ref()),
                    fmt_estimate(e.extrapolation.as_ref())
                );
            }
            if let Some(c) = &r.characterization {
                print!("{}", c.render());
            }
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match cli.opts.thread_count() {
        Ok(Some(n)) => {
            if rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .is_err()
            {
                log::debug!("thread pool already initialized");
            }
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    }
    match execute(&cli.command, &cli.opts) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
