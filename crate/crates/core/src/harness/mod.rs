//! Experiment orchestration: configuration, two-step training, zero-shot
//! evaluation, and report files.

mod config;
mod eval;
mod report;
mod train;

pub use config::{TrainConfig, CONFIG_HEADER};
pub use eval::{evaluate, predict, EvalReport, TargetResult};
pub use report::{
    compare, emit_report, parse_report_csv, per_class_csv, report_csv, summary_csv, text_table, Comparison, ReportRow,
    PER_CLASS_FILE, REPORT_FILE, SUMMARY_FILE, TABLE_FILE,
};
pub use train::{log_csv, plateaued, train_two_step, LogRow, TrainOutcome, LOG_HEADER};

use crate::synth::{generate_synthetic, SynthData, SynthSpec};
use crate::Result;

pub const SOURCE_ONLY: &str = "source-only";
pub const SUG: &str = "SUG";

/// A trained arm and its evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmRun {
    pub report: EvalReport,
    pub outcome: TrainOutcome,
}

/// Both arms of one seed on shared data.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub seed: u64,
    pub source_only: ArmRun,
    pub sug: ArmRun,
}

/// Trains with `config` on the source and evaluates on every target. The
/// report carries `config_hash` so arms of one experiment group together.
pub fn run_arm(config: &TrainConfig, data: &SynthData, arm: &str, config_hash: &str) -> Result<ArmRun> {
    let outcome = train_two_step(config, &data.source, None)?;
    let targets = evaluate(&outcome.checkpoint, &data.targets)?;
    Ok(ArmRun {
        report: EvalReport::new(arm, config.seed, config_hash, targets),
        outcome,
    })
}

/// SUG arm first, then a classification-only arm trained for the same total
/// number of epochs the SUG arm used.
pub fn run_experiment(config: &TrainConfig, data: &SynthData) -> Result<Experiment> {
    let hash = config.hash();
    let sug = run_arm(config, data, SUG, &hash)?;
    let baseline = TrainConfig {
        step1_epochs: sug.outcome.total_epochs(),
        step2_epochs: 0,
        ..config.clone()
    };
    let source_only = run_arm(&baseline, data, SOURCE_ONLY, &hash)?;
    Ok(Experiment {
        seed: config.seed,
        source_only,
        sug,
    })
}

/// Generates the data once and runs [`run_experiment`] for each seed.
pub fn run_sweep(config: &TrainConfig, spec: &SynthSpec, seeds: &[u64]) -> Result<(SynthData, Vec<Experiment>)> {
    let data = generate_synthetic(spec)?;
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        log::info!("experiment seed {seed}");
        let cfg = TrainConfig {
            seed,
            ..config.clone()
        };
        runs.push(run_experiment(&cfg, &data)?);
    }
    Ok((data, runs))
}

/// Reports of both arms, source-only first, in seed order.
pub fn sweep_reports(runs: &[Experiment]) -> Vec<EvalReport> {
    runs.iter()
        .flat_map(|e| [e.source_only.report.clone(), e.sug.report.clone()])
        .collect()
}
