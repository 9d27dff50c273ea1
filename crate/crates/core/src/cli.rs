//! Command-line front end: `screen`, `simulate` and `verify`.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

use std::io::Write;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::io::{write_atomic, CsvOptions, ResponseColumn};
use crate::model::{
    AlgorithmConfig, PenaltyKind, PenaltySpec, ScreenSizes, ScreeningCriterion, SelectionCriterion, StopReason,
    DEFAULT_SCAD_A,
};
use crate::pipeline::{explicit_config, run, Preset, SuccessMode};
use crate::report::{InputFingerprint, RunReport, RunTimings};
use crate::sim::{
    run_experiment_with_workers, CovarianceFamily, DesignSpec, ExperimentReport, ExperimentSpec, Placement,
    SignPattern, TruthSpec, ADVERSARIAL_MAGNITUDE,
};
use crate::verify::{run_suites, Engine, FastPath};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "ISCREEN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "iscreen", version, about = "Iterative variable screening for high-dimensional regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a screening algorithm on a CSV dataset.
    Screen(ScreenArgs),
    /// Estimate sure-screening rates on synthetic data.
    Simulate(SimulateArgs),
    /// Check the engine against the dense reference implementations.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Isis,
    VanIsis,
    VanIsisR,
    Fr,
    Sis,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Isis => Preset::Isis,
            PresetArg::VanIsis => Preset::VanIsis,
            PresetArg::VanIsisR => Preset::VanIsisR,
            PresetArg::Fr => Preset::Fr,
            PresetArg::Sis => Preset::SisOnce,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    Lasso,
    Scad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuccessArg {
    Final,
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlacementArg {
    First,
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct AlgorithmArgs {
    #[arg(long, value_enum, conflicts_with_all = ["scr", "sel"])]
    pub preset: Option<PresetArg>,
    /// Screening criterion.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub scr: Option<u8>,
    /// Selection criterion.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub sel: Option<u8>,
    /// Columns screened per step.
    #[arg(long, conflicts_with = "a_schedule")]
    pub a_size: Option<usize>,
    /// Comma-separated per-step screening sizes.
    #[arg(long)]
    pub a_schedule: Option<String>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum, default_value = "lasso")]
    pub penalty: PenaltyArg,
    #[arg(long, default_value_t = DEFAULT_SCAD_A)]
    pub scad_a: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "on")]
    pub standardize: Switch,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long)]
    pub output: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct ScreenArgs {
    #[arg(long)]
    pub input: String,
    /// Response column name; the last column when omitted.
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long)]
    pub no_header: bool,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    #[command(flatten)]
    pub algorithm: AlgorithmArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value_t = 5)]
    pub t: usize,
    /// `identity`, `ar1:RHO` or `cs:RHO`.
    #[arg(long, default_value = "identity")]
    pub cov: String,
    #[arg(long)]
    pub beta_min: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Use the marginally uncorrelated design; `--cov cs:RHO` sets the block
    /// correlation (0.5 otherwise).
    #[arg(long)]
    pub adversarial: bool,
    #[arg(long, value_enum)]
    pub success: Option<SuccessArg>,
    #[arg(long, value_enum, default_value = "random")]
    pub placement: PlacementArg,
    #[command(flatten)]
    pub algorithm: AlgorithmArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the JSON summary here.
    #[arg(long)]
    pub output: Option<String>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: VerifyFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyFormat {
    Table,
    Json,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code_for(&e),
            message: e.to_string(),
        }
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_)
        | Error::InvalidPenalty(_)
        | Error::InvalidRates(_)
        | Error::InfeasibleConstruction(_)
        | Error::NotPositiveDefinite => EXIT_USAGE,
        Error::InvalidDataset(_)
        | Error::ConstantColumn(_)
        | Error::DimensionMismatch(_)
        | Error::ParseError { .. }
        | Error::NonNumericCell { .. }
        | Error::EmptyFile
        | Error::ResponseColumnMissing(_)
        | Error::Io(_)
        | Error::Json(_) => EXIT_DATA,
        _ => EXIT_NUMERICAL,
    }
}

/// Parses `identity`, `ar1:RHO` or `cs:RHO`.
pub fn parse_cov_spec(s: &str) -> Result<CovarianceFamily> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("identity") {
        return Ok(CovarianceFamily::Identity);
    }
    let (kind, rho) = s
        .split_once(':')
        .ok_or_else(|| Error::InvalidConfig(format!("unknown covariance {s:?}")))?;
    let rho: f64 = rho
        .trim()
        .parse()
        .ok()
        .filter(|r: &f64| r.is_finite())
        .ok_or_else(|| Error::InvalidConfig(format!("bad correlation in {s:?}")))?;
    match kind.trim().to_ascii_lowercase().as_str() {
        "ar1" => Ok(CovarianceFamily::Ar1(rho)),
        "cs" => Ok(CovarianceFamily::CompoundSymmetry(rho)),
        _ => Err(Error::InvalidConfig(format!("unknown covariance {s:?}"))),
    }
}

/// Parses a comma-separated list of positive screening sizes.
pub fn parse_schedule(s: &str) -> Result<Vec<usize>> {
    let sizes = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .ok()
                .filter(|&a| a > 0)
                .ok_or_else(|| Error::InvalidConfig(format!("bad schedule entry {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if sizes.is_empty() {
        return Err(Error::InvalidConfig("empty schedule".into()));
    }
    Ok(sizes)
}

fn criteria_from_flags(
    args: &AlgorithmArgs,
) -> std::result::Result<(Option<Preset>, ScreeningCriterion, SelectionCriterion), CliError> {
    if let Some(p) = args.preset {
        let preset = Preset::from(p);
        let (scr, sel) = preset.criteria();
        return Ok((Some(preset), scr, sel));
    }
    match (args.scr, args.sel) {
        (Some(scr), Some(sel)) => {
            let scr = [ScreeningCriterion::Scr1, ScreeningCriterion::Scr2, ScreeningCriterion::Scr3][scr as usize - 1];
            let sel = [SelectionCriterion::Sel1, SelectionCriterion::Sel2, SelectionCriterion::Sel3][sel as usize - 1];
            Ok((None, scr, sel))
        }
        _ => Err(CliError::usage("specify --preset, or both --scr and --sel")),
    }
}

/// Builds the algorithm configuration for a dataset with `n` rows.
pub fn resolve_config(args: &AlgorithmArgs, n: usize) -> std::result::Result<AlgorithmConfig, CliError> {
    let (preset, scr, sel) = criteria_from_flags(args)?;
    let penalty = if sel.is_penalized() {
        let lambda = args
            .lambda
            .ok_or_else(|| CliError::usage("missing --lambda: penalized selection needs a penalty level"))?;
        let kind = match args.penalty {
            PenaltyArg::Lasso => PenaltyKind::Lasso,
            PenaltyArg::Scad => PenaltyKind::Scad,
        };
        Some(PenaltySpec::new(kind, lambda, args.scad_a)?)
    } else {
        if args.lambda.is_some() {
            return Err(CliError::usage("--lambda only applies to penalized selection (--sel 2 or 3)"));
        }
        None
    };
    let sizes = match (&args.a_size, &args.a_schedule) {
        (Some(a), _) => Some(ScreenSizes::Constant(*a)),
        (None, Some(s)) => Some(ScreenSizes::Schedule(parse_schedule(s)?)),
        (None, None) => None,
    };
    let max_iters = match (&sizes, args.max_iters) {
        (Some(ScreenSizes::Schedule(v)), None) => Some(v.len()),
        (_, m) => m,
    };
    Ok(match preset {
        Some(p) => p.config(n, penalty, max_iters, sizes),
        None => explicit_config(scr, sel, n, penalty, max_iters, sizes),
    })
}

/// Worker count from the environment; `None` means all cores.
pub fn workers_from_env() -> std::result::Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w > 0)
            .map(Some)
            .ok_or_else(|| CliError::usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> std::result::Result<T, CliError> {
    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| CliError::usage(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn emit(out: &OutputArgs, text: &str, stdout: &mut dyn Write) -> std::result::Result<(), CliError> {
    match &out.output {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => stdout.write_all(text.as_bytes()).map_err(Error::from)?,
    }
    Ok(())
}

fn cmd_screen(args: &ScreenArgs, stdout: &mut dyn Write) -> std::result::Result<i32, CliError> {
    let delimiter = u8::try_from(args.delimiter)
        .ok()
        .filter(u8::is_ascii)
        .ok_or_else(|| CliError::usage("--delimiter must be a single ASCII character"))?;
    let opts = CsvOptions {
        response: match &args.response {
            Some(name) => ResponseColumn::Name(name.clone()),
            None => ResponseColumn::Last,
        },
        has_header: !args.no_header,
        delimiter,
    };
    // Validate flag combinations before touching the file.
    criteria_from_flags(&args.algorithm)?;
    let load_start = Instant::now();
    let bytes = std::fs::read(&args.input).map_err(Error::from)?;
    let raw = crate::io::parse_csv(bytes.as_slice(), &opts)?;
    let data = match args.algorithm.standardize {
        Switch::On => raw.standardize()?,
        Switch::Off => raw,
    };
    let load_seconds = load_start.elapsed().as_secs_f64();
    let config = resolve_config(&args.algorithm, data.n())?;
    config.validate(data.p())?;
    let workers = workers_from_env()?;
    let run_start = Instant::now();
    let traj = with_workers(workers, || run(&data, &config))??;
    let run_seconds = run_start.elapsed().as_secs_f64();
    let failed_at_start = traj.records.is_empty()
        && matches!(traj.stop_reason, StopReason::RankDeficient | StopReason::NoEligibleColumns);
    let report = RunReport::new(
        InputFingerprint::new(&args.input, &bytes, data.n(), data.p()),
        config,
        &data,
        traj,
        RunTimings {
            load_seconds,
            run_seconds,
        },
    );
    let text = match args.out.format {
        Format::Json => report.to_json()? + "\n",
        Format::Csv => report.trajectory_csv()?,
    };
    emit(&args.out, &text, stdout)?;
    Ok(if failed_at_start { EXIT_NUMERICAL } else { EXIT_OK })
}

/// Experiment specification from `simulate` flags.
pub fn experiment_spec(args: &SimulateArgs) -> std::result::Result<ExperimentSpec, CliError> {
    let config = resolve_config(&args.algorithm, args.n)?;
    let cov = parse_cov_spec(&args.cov)?;
    let design = if args.adversarial {
        let rho = match cov {
            CovarianceFamily::CompoundSymmetry(r) => r,
            CovarianceFamily::Identity => 0.5,
            _ => return Err(CliError::usage("--adversarial takes --cov cs:RHO")),
        };
        DesignSpec::Adversarial {
            t: args.t,
            rho,
            magnitude: args.beta_min.unwrap_or(ADVERSARIAL_MAGNITUDE),
        }
    } else {
        DesignSpec::Gaussian {
            covariance: cov,
            truth: TruthSpec {
                t: args.t,
                magnitude: args.beta_min.unwrap_or(1.0),
                signs: SignPattern::Positive,
                placement: match args.placement {
                    PlacementArg::First => Placement::First,
                    PlacementArg::Random => Placement::Random,
                },
            },
        }
    };
    let success_mode = match args.success {
        Some(SuccessArg::Final) => SuccessMode::Final,
        Some(SuccessArg::Any) => SuccessMode::Any,
        None => SuccessMode::default_for(config.selection),
    };
    Ok(ExperimentSpec {
        n: args.n,
        p: args.p,
        design,
        noise_sd: args.noise_sd,
        replications: args.reps,
        algorithm: config,
        success_mode,
        standardize: args.algorithm.standardize == Switch::On,
        seed: args.algorithm.seed,
    })
}

fn experiment_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["replication", "success", "iterations", "iterations_to_coverage", "final_model_size"])
        .map_err(crate::io::csv_io)?;
    for r in &report.records {
        w.write_record([
            r.replication.to_string(),
            r.success.to_string(),
            r.iterations.to_string(),
            r.iterations_to_coverage.map_or(String::new(), |k| k.to_string()),
            r.final_model_size.to_string(),
        ])
        .map_err(crate::io::csv_io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> std::result::Result<i32, CliError> {
    let spec = experiment_spec(args)?;
    let workers = workers_from_env()?;
    let report = run_experiment_with_workers(&spec, workers)?;
    let text = match args.out.format {
        Format::Json => serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n",
        Format::Csv => experiment_csv(&report)?,
    };
    emit(&args.out, &text, stdout)?;
    Ok(EXIT_OK)
}

fn cmd_verify(args: &VerifyArgs, fast: &dyn FastPath, stdout: &mut dyn Write) -> std::result::Result<i32, CliError> {
    if args.instances == 0 {
        return Err(CliError::usage("--instances must be at least 1"));
    }
    let report = run_suites(fast, args.instances, args.seed)?;
    let json = serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n";
    if let Some(path) = &args.output {
        write_atomic(path, json.as_bytes())?;
    }
    let text = match args.format {
        VerifyFormat::Table => report.table(),
        VerifyFormat::Json => json,
    };
    stdout.write_all(text.as_bytes()).map_err(Error::from)?;
    Ok(if report.all_passed { EXIT_OK } else { EXIT_NUMERICAL })
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code. `fast` is the engine used by `verify`.
pub fn run_cli_with<I, T>(args: I, fast: &dyn FastPath, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    let result = match &cli.command {
        Command::Screen(a) => cmd_screen(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Verify(a) => cmd_verify(a, fast, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_cli_with(args, &Engine, stdout, stderr)
}
