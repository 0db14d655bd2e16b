//! `symgrid`: classify search logs against symptom query patterns, geocode
//! consenting users' fixes into 500 m grid squares, and report distinct
//! searcher counts per grid, day and time span with privacy suppression,
//! hotspot ranking and choropleth export.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use symgrid_core::grid::{CoverageWindow, GridLevel};
use symgrid_core::report::ChoroplethFormat;
use symgrid_core::timespan::{StudyWindow, TimeSpan, UtcOffset};
use symgrid_core::wssci::CountMode;

mod commands;
mod config;
mod output;

use config::{parse_coverage, salt_from_env, FileConfig, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "symgrid", version, about = "Symptom-query surveillance over search and location logs")]
struct Cli {
    /// Fixed UTC offset for local dates and time spans (e.g. +09:00).
    #[arg(long, global = true)]
    tz: Option<UtcOffset>,
    /// Worker threads for the counting stage.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Manage symptom query pattern sets
    Patterns {
        #[command(subcommand)]
        cmd: PatternsCmd,
    },
    /// Parse input logs, enforce consent gating and report ingest statistics
    Ingest(IngestArgs),
    /// Execute the full pipeline and write counter, report and stats files
    Run(RunArgs),
    /// Re-aggregate an existing counter checkpoint
    Report(ReportArgs),
    /// Generate a synthetic planted-cluster scenario, optionally chaining the pipeline
    Simulate(SimulateArgs),
}

#[derive(Subcommand)]
enum PatternsCmd {
    /// Write the builtin 63-pattern set in pattern-file syntax
    Export {
        /// Output file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load a pattern file and report errors with line numbers
    Validate { file: PathBuf },
}

/// Flags shared by every pipeline-flavored subcommand.
#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML file with default settings (flags win)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Local study window as START..END dates
    #[arg(long)]
    study_window: Option<StudyWindow>,
    /// Accepted coordinate window: south,west,north,east degrees
    #[arg(long, value_parser = parse_coverage)]
    coverage: Option<CoverageWindow>,
}

#[derive(Args)]
struct ReportKnobs {
    /// Aggregation level: half, third or second
    #[arg(long)]
    level: Option<GridLevel>,
    /// Time span: day, evening, night or whole
    #[arg(long)]
    span: Option<TimeSpan>,
    /// Report range start date (defaults to study window, then data extent)
    #[arg(long)]
    from: Option<NaiveDate>,
    /// Report range end date
    #[arg(long)]
    to: Option<NaiveDate>,
    /// Suppress blocks with totals below this
    #[arg(long)]
    threshold: Option<u64>,
    /// Keep the top K ranked blocks
    #[arg(long)]
    top: Option<usize>,
    /// Choropleth format: csv or geojson
    #[arg(long)]
    format: Option<ChoroplethFormat>,
    /// Baseline CSV (block_code,value) for ratio reporting
    #[arg(long)]
    baseline: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Search log CSV (user_id,timestamp,query)
    #[arg(long)]
    search: Option<PathBuf>,
    /// Location log CSV (user_id,timestamp,lat,lon,consent)
    #[arg(long)]
    locations: Option<PathBuf>,
    /// Environment variable holding the pseudonymization salt
    #[arg(long)]
    salt_env: String,
    /// Directory for canonical pseudonymized streams
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    knobs: ReportKnobs,
    /// Search log CSV (user_id,timestamp,query)
    #[arg(long)]
    search: PathBuf,
    /// Location log CSV (user_id,timestamp,lat,lon,consent)
    #[arg(long)]
    locations: PathBuf,
    /// Environment variable holding the pseudonymization salt
    #[arg(long)]
    salt_env: String,
    /// Pattern file (builtin 63-pattern set when omitted)
    #[arg(long)]
    patterns: Option<PathBuf>,
    /// WSSCI attribution window in days after the matching query
    #[arg(long)]
    window_days: Option<u32>,
    /// Distinct counting mode: exact or sketch[:precision]
    #[arg(long)]
    mode: Option<CountMode>,
    /// Merge a previous run's counter checkpoint (reads its .users sidecar)
    #[arg(long)]
    merge_with: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    knobs: ReportKnobs,
    /// Counter checkpoint written by `run`
    #[arg(long)]
    counter: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the generated logs and ground truth
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Chain the full pipeline over the generated logs
    #[arg(long)]
    then_run: bool,
    /// Salt variable for the chained run (seed-derived when omitted)
    #[arg(long)]
    salt_env: Option<String>,
    #[command(flatten)]
    knobs: ReportKnobs,
    /// Counting mode for the chained run
    #[arg(long)]
    mode: Option<CountMode>,
}

fn overrides(
    cli_tz: Option<UtcOffset>,
    cli_jobs: Option<usize>,
    common: &CommonArgs,
    knobs: Option<&ReportKnobs>,
) -> Overrides {
    let mut o = Overrides {
        tz: cli_tz,
        jobs: cli_jobs,
        study_window: common.study_window,
        coverage: common.coverage,
        ..Default::default()
    };
    if let Some(k) = knobs {
        o.level = k.level;
        o.span = k.span;
        o.from = k.from;
        o.to = k.to;
        o.threshold = k.threshold;
        o.top = k.top;
        o.format = k.format;
    }
    o
}

fn load_file_config(common: &CommonArgs) -> Result<FileConfig> {
    match &common.config {
        Some(path) => FileConfig::load(path),
        None => Ok(FileConfig::default()),
    }
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Patterns { cmd } => match cmd {
            PatternsCmd::Export { out } => commands::patterns::export(out.as_deref()),
            PatternsCmd::Validate { file } => commands::patterns::validate(&file),
        },
        Command::Ingest(args) => {
            let file = load_file_config(&args.common)?;
            let cfg = RunConfig::resolve(overrides(cli.tz, cli.jobs, &args.common, None), file)?;
            let salt = salt_from_env(&args.salt_env)?;
            commands::ingest::execute(
                &cfg,
                &salt,
                args.search.as_deref(),
                args.locations.as_deref(),
                args.out.as_deref(),
            )
        }
        Command::Run(args) => {
            let file = load_file_config(&args.common)?;
            let mut o = overrides(cli.tz, cli.jobs, &args.common, Some(&args.knobs));
            o.patterns = args.patterns.clone();
            o.window_days = args.window_days;
            o.mode = args.mode;
            let cfg = RunConfig::resolve(o, file)?;
            let salt = salt_from_env(&args.salt_env)?;
            commands::run::execute(
                &cfg,
                &salt,
                &args.search,
                &args.locations,
                args.merge_with.as_deref(),
                args.knobs.baseline.as_deref(),
                &args.out,
            )
        }
        Command::Report(args) => {
            let file = load_file_config(&args.common)?;
            let cfg = RunConfig::resolve(
                overrides(cli.tz, cli.jobs, &args.common, Some(&args.knobs)),
                file,
            )?;
            commands::report::execute(
                &cfg,
                &args.counter,
                args.knobs.baseline.as_deref(),
                &args.out,
            )
        }
        Command::Simulate(args) => {
            // tz, study window and coverage for the chained run come from
            // the scenario config itself; only reporting knobs pass through.
            let run_overrides = Overrides {
                jobs: cli.jobs,
                level: args.knobs.level,
                span: args.knobs.span,
                from: args.knobs.from,
                to: args.knobs.to,
                threshold: args.knobs.threshold,
                top: args.knobs.top,
                format: args.knobs.format,
                mode: args.mode,
                ..Default::default()
            };
            let salt = match &args.salt_env {
                Some(var) => Some(salt_from_env(var)?),
                None => None,
            };
            commands::simulate::execute(
                &args.config,
                &args.out,
                commands::simulate::SimulateOptions {
                    seed_override: args.seed,
                    then_run: args.then_run,
                    salt,
                    run_overrides,
                },
            )
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
