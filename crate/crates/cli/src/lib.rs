//! `sten`: synthesize epoch files, train, evaluate and gradient-check.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sten_core::data::{
    generate_synthetic, load_epochset, save_epochset, split_subject_independent, standardize,
    write_sidecar, LabeledEpochs,
};
use sten_core::eval::evaluate;
use sten_core::model::{build_model, load_checkpoint};
use sten_core::nn::gradcheck::{gradcheck_suite, TOLERANCE};
use sten_core::train::fit;
use sten_core::Rng;

use config::{Overrides, RunConfig};

pub const CHECKPOINT_FILE: &str = "best.sten";
pub const LOG_FILE: &str = "train_log.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const FIT_FILE: &str = "fit.json";
pub const MANIFEST_FILE: &str = "manifest.toml";

/// `println!` that stops quietly when stdout is a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        match writeln!(std::io::stdout(), $($arg)*) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
            other => other?,
        }
    }};
}

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sten", version, about = "EEG valence classification pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic epoch file.
    Synth(SynthArgs),
    /// Split by subject, train with early stopping, report test metrics.
    Train(TrainArgs),
    /// Metrics of a checkpoint on every trial of an epoch file.
    Eval(EvalArgs),
    /// Compare every layer's gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output epoch file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub subjects: usize,
    #[arg(long, default_value_t = 12)]
    pub trials_per_subject: usize,
    #[arg(long, default_value_t = 16)]
    pub channels: usize,
    #[arg(long, default_value_t = 250)]
    pub samples: usize,
    #[arg(long, default_value_t = 125.0)]
    pub sample_rate: f32,
    /// Also write a JSON-lines listing next to the file.
    #[arg(long)]
    pub sidecar: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Epoch file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for checkpoint, log, metrics and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Share of subjects held out for testing [default: 0.2].
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Share of the remaining subjects used for early stopping [default: 0.125].
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Maximum epochs [default: 200].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate [default: 0.01].
    #[arg(long)]
    pub lr: Option<f64>,
    /// [default: 16]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Epochs without validation improvement before stopping [default: 35].
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let es = generate_synthetic(
        a.subjects,
        a.trials_per_subject,
        a.channels,
        a.samples,
        a.sample_rate,
        a.seed,
    )?;
    save_epochset(&es, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    if a.sidecar {
        write_sidecar(&es, a.out.with_extension("jsonl"))?;
    }
    say!(
        "wrote {} trials ({} subjects, {} channels x {} samples) to {}",
        es.n_trials(),
        a.subjects,
        a.channels,
        a.samples,
        a.out.display()
    );
    Ok(())
}

/// The resolved configuration of a `train` invocation.
pub fn resolve_train_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(Overrides {
        data: a.data.clone(),
        out: a.out.clone(),
        seed: a.seed,
        test_fraction: a.test_fraction,
        val_fraction: a.val_fraction,
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch_size,
        patience: a.patience,
    });
    Ok(cfg)
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = resolve_train_config(&a)?;
    let data_path = cfg.data_path()?;
    let out = cfg.out_dir()?;

    let es =
        load_epochset(data_path).with_context(|| format!("loading {}", data_path.display()))?;
    let arch = cfg.arch.to_arch(es.n_channels(), es.n_samples());
    arch.validate()?;

    let mut master = Rng::new(cfg.seed);
    let mut split_rng = master.fork();
    let mut init_rng = master.fork();
    let train_seed = master.next_u64();
    let train_cfg = cfg.train.to_config(train_seed, out);
    train_cfg.validate()?;

    let split =
        split_subject_independent(&es, cfg.test_fraction, cfg.val_fraction, &mut split_rng)?
            .map_epochs(|e| Ok(standardize(e)))?;
    say!(
        "{} trials: {} train / {} val / {} test subjects",
        es.n_trials(),
        subject_count(&split.train),
        subject_count(&split.val),
        subject_count(&split.test)
    );

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join(MANIFEST_FILE), cfg.to_toml()?)?;

    let params = build_model(&arch, &mut init_rng)?;
    let (best, report) = fit(params, &split.train, &split.val, &train_cfg)?;
    say!(
        "stopped at epoch {}, best epoch {} (val loss {:.5})",
        report.stopped_epoch,
        report.best_epoch,
        report.best_val_loss
    );
    fs::write(
        out.join(FIT_FILE),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;

    let metrics = evaluate(&best, &split.test)?;
    fs::write(out.join(METRICS_FILE), metrics.to_json() + "\n")?;
    say!(
        "test accuracy {:.4}, F1 {:.4} on {} trials",
        metrics.accuracy,
        metrics.f1,
        metrics.n
    );
    Ok(())
}

fn subject_count(part: &LabeledEpochs) -> usize {
    part.epochs.subjects().len()
}

fn eval(a: EvalArgs) -> Result<()> {
    let params = load_checkpoint(&a.checkpoint)
        .with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let es = load_epochset(&a.data).with_context(|| format!("loading {}", a.data.display()))?;
    let data = LabeledEpochs::from_epochs(standardize(&es))?;
    let metrics = evaluate(&params, &data)?;
    let json = metrics.to_json();
    if let Some(path) = &a.out {
        write_file(path, &(json.clone() + "\n"))?;
    }
    say!("{json}");
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let results = gradcheck_suite(&mut Rng::new(a.seed))?;
    let mut failed = Vec::new();
    for (layer, err) in &results {
        let ok = *err < TOLERANCE;
        say!(
            "{:<18} {err:.3e} {}",
            layer.name(),
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(layer.name());
        }
    }
    if !failed.is_empty() {
        bail!(
            "max relative error >= {TOLERANCE:e} for {}",
            failed.join(", ")
        );
    }
    Ok(())
}
