//! `sugdg`: synthetic data generation, sub-domain splitting, training,
//! zero-shot evaluation and seed-sweep experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sugdg::dataset::{load_manifest, save_dataset, write_split, read_split};
use sugdg::harness::{
    compare, emit_report, evaluate, report_csv, run_sweep, sweep_reports, train_two_step, EvalReport, TrainConfig,
    SOURCE_ONLY, SUG,
};
use sugdg::net::{load_checkpoint, save_checkpoint};
use sugdg::split::{split_dataset, Metric, SplitMethod, SplitModel};
use sugdg::synth::{generate_synthetic, SynthSpec};
use sugdg::{Error, Result};

const THREADS_VAR: &str = "SUGDG_THREADS";

#[derive(Parser)]
#[command(name = "sugdg", version, about = "Single-dataset domain generalization for point-cloud classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a source dataset and target datasets from a synthetic spec.
    GenSynth(GenSynthArgs),
    /// Split a dataset class-wise into sub-domains.
    Split(SplitArgs),
    /// Train a classifier with the two-step strategy.
    Train(TrainArgs),
    /// Evaluate a checkpoint zero-shot on target datasets.
    Eval(EvalArgs),
    /// Generate data, train source-only and SUG arms per seed, and report.
    Run(RunArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    /// Synthetic spec file; the bundled benchmark when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "random")]
    method: SplitMethod,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value = "cd")]
    metric: Metric,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trained checkpoint, required by the entropy and feature methods.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Precomputed split; otherwise the configured method runs after step 1.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV; defaults to the checkpoint path with a `.log.csv` suffix.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated target manifests.
    #[arg(long, value_delimiter = ',', required = true)]
    targets: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "model")]
    arm: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Synthetic spec file; the bundled benchmark when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of seeds, counting up from the config seed.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long)]
    out: PathBuf,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_spec(path: Option<&Path>) -> Result<SynthSpec> {
    match path {
        Some(p) => SynthSpec::parse(&read_text(p)?),
        None => Ok(SynthSpec::bundled()),
    }
}

fn gen_synth(args: GenSynthArgs) -> Result<()> {
    let spec = load_spec(args.spec.as_deref())?;
    let data = generate_synthetic(&spec)?;
    for ds in std::iter::once(&data.source).chain(&data.targets) {
        let path = save_dataset(ds, &args.out)?;
        println!("{}\t{} samples\t{}", ds.name, ds.len(), path.display());
    }
    Ok(())
}

fn split(args: SplitArgs) -> Result<()> {
    let dataset = load_manifest(&args.manifest)?;
    let checkpoint = args.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let model = checkpoint.as_ref().map(|c| &c.params as &dyn SplitModel);
    let result = split_dataset(&dataset, args.method, args.k, args.metric, args.seed, model)?;
    result.validate(&dataset.labels(), dataset.num_classes())?;
    write_split(&args.out, &result.assignment, &result.describe())?;
    for (s, row) in result.cell_counts.iter().enumerate() {
        println!("sub-domain {s}: {row:?}");
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let config = TrainConfig::parse(&read_text(&args.config)?)?;
    let dataset = load_manifest(&args.manifest)?;
    let split = match &args.split {
        Some(p) => Some(read_split(p)?),
        None => dataset.subdomains(),
    };
    let outcome = train_two_step(&config, &dataset, split.as_deref())?;
    save_checkpoint(&outcome.checkpoint, &args.out)?;
    let log_path = args.log.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".log.csv");
        PathBuf::from(p)
    });
    write_text(&log_path, &outcome.log_csv())?;
    if let Some(msg) = outcome.aborted {
        return Err(Error::Numeric(format!("{msg} (last good checkpoint saved)")));
    }
    println!(
        "trained {} + {} epochs; checkpoint {}",
        outcome.step1_epochs,
        outcome.step2_epochs,
        args.out.display()
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let targets = args.targets.iter().map(|p| load_manifest(p)).collect::<Result<Vec<_>>>()?;
    let results = evaluate(&checkpoint, &targets)?;
    let report = EvalReport::new(args.arm, args.seed, "-", results);
    write_text(&args.out, &report_csv(std::slice::from_ref(&report))?)?;
    for t in &report.targets {
        println!("{}\t{:.2}", t.name, t.accuracy);
    }
    println!("Avg.\t{:.2}", report.avg);
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let config = TrainConfig::parse(&read_text(&args.config)?)?;
    let spec = load_spec(args.spec.as_deref())?;
    if args.seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..args.seeds).map(|i| config.seed + i).collect();
    let (data, runs) = run_sweep(&config, &spec, &seeds)?;
    for e in &runs {
        let path = args.out.join(format!("train_log_seed{}.csv", e.seed));
        write_text(&path, &e.sug.outcome.log_csv())?;
    }
    let reports = sweep_reports(&runs);
    let comparison = compare(&reports, SOURCE_ONLY, SUG)?;
    emit_report(&reports, &data.source.class_names, std::slice::from_ref(&comparison), &args.out)?;
    print!("{}", fs::read_to_string(args.out.join(sugdg::harness::TABLE_FILE)).unwrap_or_default());
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_VAR} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::GenSynth(a) => gen_synth(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Run(a) => run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sugdg: {e}");
            ExitCode::FAILURE
        }
    }
}
