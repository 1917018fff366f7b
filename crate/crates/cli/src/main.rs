//! `bearing-rul`: detect -> featurize -> label -> train -> evaluate -> report.

mod config;
mod stages;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use bearing_rul::dataset::Condition;
use clap::{Parser, Subcommand, ValueEnum};

use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "bearing-rul", version, about = "Bearing degradation onset detection and survival-based RUL evaluation")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Operating condition: C1, C2 or C3.
    #[arg(long, global = true)]
    condition: Option<Condition>,
    /// Fraction of records to censor, in [0, 1).
    #[arg(long, global = true)]
    censoring: Option<f64>,
    /// Model selector: km, cox, rsf or mtlr.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Output directory for every stage.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset root (XJTU-SY layout).
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CorpusKind {
    /// Raw vibration minute files with injected outer-race faults.
    Vibration,
    /// Labelled covariates with Weibull lifetimes.
    Weibull,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Annotate the degradation onset of every bearing.
    Detect,
    /// Per-minute time-domain features of every bearing.
    Featurize,
    /// Rolling-average supervised dataset, uncensored and censored.
    Label,
    /// Fit the selected model on the censored dataset.
    Train,
    /// Stratified k-fold evaluation of the selected model.
    Evaluate,
    /// Plot data: KM bounds, mean curves, stratified curves.
    Report,
    /// Every stage from detect to report.
    Run,
    /// Write a synthetic corpus and its run configuration.
    Synth {
        #[arg(long, value_enum, default_value_t = CorpusKind::Vibration)]
        kind: CorpusKind,
        /// Vibration corpus: number of bearings (the last one stays healthy).
        #[arg(long, default_value_t = 6)]
        bearings: usize,
        /// Vibration corpus: minutes per bearing.
        #[arg(long, default_value_t = 64)]
        minutes: usize,
        /// Weibull corpus: number of records.
        #[arg(long, default_value_t = 600)]
        records: usize,
        /// Weibull corpus: proportional-hazards generator instead of the default.
        #[arg(long)]
        proportional: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        condition: cli.condition,
        censoring: cli.censoring,
        model: cli.model,
        out: cli.out,
        root: cli.root,
    };
    let config = RunConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Detect => {
            let records = stages::detect(&config)?;
            for r in records {
                println!("{}\t{}\t{}", r.bearing_id, r.event_time_minutes, r.end_of_life_minutes);
            }
        }
        Command::Featurize => {
            let n = stages::featurize(&config)?;
            println!("featurized {n} bearings");
        }
        Command::Label => {
            let d = stages::label(&config)?;
            println!("{} records, {} censored", d.len(), d.n_censored());
        }
        Command::Train => {
            stages::train(&config)?;
            println!("wrote {}", stages::model_path(&config, config.model_kind()?).display());
        }
        Command::Evaluate => print_report(&stages::evaluate(&config)?),
        Command::Report => {
            stages::report(&config)?;
            println!("wrote {}", config.out_dir().join(stages::REPORT).display());
        }
        Command::Run => {
            stages::detect(&config)?;
            stages::featurize(&config)?;
            stages::label(&config)?;
            stages::train(&config)?;
            print_report(&stages::evaluate(&config)?);
            stages::report(&config)?;
        }
        Command::Synth {
            kind,
            bearings,
            minutes,
            records,
            proportional,
        } => {
            match kind {
                CorpusKind::Vibration => {
                    let seed = config.require_seed("corpus generation")?;
                    synth::vibration(&config.out_dir(), seed, bearings, minutes)?;
                }
                CorpusKind::Weibull => synth::weibull(&config, records, proportional)?,
            }
            println!("wrote {}", config.out_dir().join("run.toml").display());
        }
    }
    Ok(())
}

fn print_report(report: &bearing_rul::eval::EvaluationReport) {
    println!("{} ({} folds, censoring {})", report.model, report.n_folds, report.censor_pct);
    for (name, v) in report.summary_rows() {
        println!("  {name:<12} {:>10.3} ± {:.3}", v.mean, v.sd);
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
