//! Command-line front end: fitting, prediction, evaluation, holdout studies,
//! penalty ablation, contour emission, synthetic generation, and bundled
//! fixture dumps.
//!
//! Exit codes: 0 on success, 1 on validation/usage errors, 2 on I/O errors.
//! Diagnostics go to stderr; machine output goes to stdout or `--out`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ctxscale::analysis::{
    context_generalization_study, contour_grid, generalization_report, mean_abs_error,
    penalty_ablation, synthetic_generate, write_prediction_csv, DEFAULT_CONTOUR_RANGE,
};
use ctxscale::data::{
    aggregate, builtin_dataset, parse_points, parse_records, write_points_csv, AggregatedPoint,
    BuiltinTask, RecordFormat,
};
use ctxscale::model::{PenaltyConfig, ScalingParams};
use ctxscale::optimize::{fit, FitConfig, FitResult};

#[derive(Parser)]
#[command(name = "ctxscale", version)]
#[command(about = "Fit and analyze joint compute/context scaling laws for LLM task performance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the scaling law to evaluation data; writes a fit artifact (JSON)
    Fit(FitCmd),
    /// Evaluate fitted parameters over points; writes per-point predictions
    Predict(PredictCmd),
    /// Score fitted parameters: per-point residuals plus MAE (JSON)
    Evaluate(EvaluateCmd),
    /// Refit with long prompts held out; reports extrapolation error (JSON)
    Holdout(HoldoutCmd),
    /// Fit with the penalty on and off; reports split errors (JSON)
    Ablate(AblateCmd),
    /// Emit predictions over a log-spaced prompt-length grid
    Contour(ContourCmd),
    /// Generate synthetic observations from fitted parameters
    Synth(SynthCmd),
    /// Dump a bundled observation grid as aggregated CSV
    Builtin(BuiltinCmd),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Arithmetic,
    Commonsense,
    Translation,
}

impl From<TaskArg> for BuiltinTask {
    fn from(value: TaskArg) -> Self {
        match value {
            TaskArg::Arithmetic => BuiltinTask::Arithmetic,
            TaskArg::Commonsense => BuiltinTask::Commonsense,
            TaskArg::Translation => BuiltinTask::Translation,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for RecordFormat {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Csv => RecordFormat::Csv,
            FormatArg::Json => RecordFormat::Json,
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// Bundled task grid to use as input
    #[arg(long, value_enum, conflicts_with = "input")]
    builtin: Option<TaskArg>,
    /// Evaluation data file (aggregated points unless --records is set)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Treat --input as raw per-instance records and aggregate them first
    #[arg(long, requires = "input")]
    records: bool,
    /// Input encoding; inferred from the file extension when omitted
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

impl InputArgs {
    fn load(&self) -> Result<Vec<AggregatedPoint>> {
        if let Some(task) = self.builtin {
            return Ok(builtin_dataset(task.into()));
        }
        let path = self
            .input
            .as_ref()
            .context("one of --builtin or --input is required")?;
        let format = self
            .format
            .map(RecordFormat::from)
            .unwrap_or_else(|| infer_format(path));
        let file =
            fs::File::open(path).with_context(|| format!("opening input {}", path.display()))?;
        if self.records {
            let records = parse_records(file, format)?;
            Ok(aggregate(&records)?)
        } else {
            Ok(parse_points(file, format)?)
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// Fit configuration TOML (sections: bounds, penalty, de, local)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override (flag > CTXSCALE_SEED > config file > default)
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<FitConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                FitConfig::from_toml(&text)?
            }
            None => FitConfig::default(),
        };
        if self.seed.is_none() {
            if let Ok(env_seed) = std::env::var("CTXSCALE_SEED") {
                config.seed = env_seed
                    .parse()
                    .with_context(|| format!("CTXSCALE_SEED = `{env_seed}` is not a u64"))?;
            }
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct PenaltyArgs {
    /// Disable the over-limit penalty factor
    #[arg(long)]
    penalty_off: bool,
    /// Override the penalty sharpness (1/tokens)
    #[arg(long)]
    sharpness: Option<f64>,
}

impl PenaltyArgs {
    fn apply(&self, mut penalty: PenaltyConfig) -> PenaltyConfig {
        if self.penalty_off {
            penalty.enabled = false;
        }
        if let Some(sharpness) = self.sharpness {
            penalty.sharpness = sharpness;
        }
        penalty
    }
}

#[derive(Args)]
struct FitCmd {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictCmd {
    /// Fit artifact (JSON) or bare parameter object
    #[arg(long)]
    params: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    penalty: PenaltyArgs,
    /// Output encoding
    #[arg(long, value_enum, default_value = "csv")]
    out_format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateCmd {
    /// Fit artifact (JSON) or bare parameter object
    #[arg(long)]
    params: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    penalty: PenaltyArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HoldoutCmd {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Hold out every point with n_pmt above this many tokens
    #[arg(long, default_value_t = 10_000.0)]
    threshold: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateCmd {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ContourCmd {
    /// Fit artifact (JSON) or bare parameter object
    #[arg(long)]
    params: PathBuf,
    /// Compute values (FLOPs), comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    c_values: Vec<f64>,
    /// Context limit in tokens
    #[arg(long)]
    n_ctx: u64,
    /// Prompt-axis lower end in tokens
    #[arg(long, default_value_t = DEFAULT_CONTOUR_RANGE.0)]
    min: f64,
    /// Prompt-axis upper end in tokens
    #[arg(long, default_value_t = DEFAULT_CONTOUR_RANGE.1)]
    max: f64,
    /// Points along the log-spaced prompt axis
    #[arg(long, default_value_t = 200)]
    resolution: usize,
    #[command(flatten)]
    penalty: PenaltyArgs,
    /// Output encoding (CSV is long-format C,n_pmt,value)
    #[arg(long, value_enum, default_value = "csv")]
    out_format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthCmd {
    /// Fit artifact (JSON) or bare parameter object
    #[arg(long)]
    params: PathBuf,
    /// Take the (C, n_pmt, n_ctx) design from a bundled grid
    #[arg(long, value_enum, conflicts_with = "design")]
    design_builtin: Option<TaskArg>,
    /// Take the design from an aggregated points file
    #[arg(long)]
    design: Option<PathBuf>,
    /// Gaussian noise standard deviation added to each metric
    #[arg(long, default_value_t = 0.0)]
    noise_sd: f64,
    /// Seed (flag > CTXSCALE_SEED > 0)
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    penalty: PenaltyArgs,
    /// Output encoding (JSON embeds the generating provenance)
    #[arg(long, value_enum, default_value = "csv")]
    out_format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuiltinCmd {
    /// Task grid to dump
    #[arg(value_enum)]
    task: TaskArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let message = e.to_string();
            let first_line = message.lines().next().unwrap_or("invalid invocation");
            eprintln!("{first_line} (see `ctxscale --help`)");
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<io::Error>().is_some() {
            return 2;
        }
        if matches!(
            cause.downcast_ref::<ctxscale::Error>(),
            Some(ctxscale::Error::Io(_))
        ) {
            return 2;
        }
    }
    1
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(cmd) => {
            let points = cmd.input.load()?;
            let config = cmd.config.resolve()?;
            eprintln!("fitting {} points (seed {})", points.len(), config.seed);
            let result = fit(&points, &config)?;
            for warning in &result.warnings {
                eprintln!("warning: {warning}");
            }
            eprintln!(
                "fit done: mae = {:.4}, sse = {:.6e}, {} DE generations",
                result.mae, result.sse, result.de_generations_used
            );
            write_output(&cmd.out, &(result.to_json()? + "\n"))
        }
        Command::Predict(cmd) => {
            let (params, penalty) = load_params(&cmd.params)?;
            let penalty = cmd.penalty.apply(penalty);
            let points = cmd.input.load()?;
            let rows = generalization_report(&params, &penalty, &points)?;
            match cmd.out_format {
                FormatArg::Csv => {
                    let mut buf = Vec::new();
                    write_prediction_csv(&mut buf, &points, &rows)?;
                    write_output(&cmd.out, &String::from_utf8(buf).expect("csv is utf-8"))
                }
                FormatArg::Json => {
                    write_output(&cmd.out, &(serde_json::to_string_pretty(&rows)? + "\n"))
                }
            }
        }
        Command::Evaluate(cmd) => {
            let (params, penalty) = load_params(&cmd.params)?;
            let penalty = cmd.penalty.apply(penalty);
            let points = cmd.input.load()?;
            let rows = generalization_report(&params, &penalty, &points)?;
            let mae = mean_abs_error(&params, &penalty, &points)?;
            let report = serde_json::json!({
                "mae": mae,
                "count": points.len(),
                "params": params,
                "penalty": penalty,
                "rows": rows,
            });
            write_output(&cmd.out, &(serde_json::to_string_pretty(&report)? + "\n"))
        }
        Command::Holdout(cmd) => {
            let points = cmd.input.load()?;
            let config = cmd.config.resolve()?;
            eprintln!(
                "holdout study at {} tokens over {} points (seed {})",
                cmd.threshold,
                points.len(),
                config.seed
            );
            let study = context_generalization_study(&points, cmd.threshold, &config)?;
            eprintln!(
                "held-out mae = {:.4} over {} points",
                study.held_out_mae, study.held_out_count
            );
            write_output(&cmd.out, &(serde_json::to_string_pretty(&study)? + "\n"))
        }
        Command::Ablate(cmd) => {
            let points = cmd.input.load()?;
            let config = cmd.config.resolve()?;
            eprintln!(
                "penalty ablation over {} points (seed {})",
                points.len(),
                config.seed
            );
            let report = penalty_ablation(&points, &config)?;
            eprintln!(
                "over-limit mae: {:.4} with penalty, {:.4} without",
                report.penalty_on.mae_over_limit, report.penalty_off.mae_over_limit
            );
            write_output(&cmd.out, &(report.to_json()? + "\n"))
        }
        Command::Contour(cmd) => {
            let (params, penalty) = load_params(&cmd.params)?;
            let penalty = cmd.penalty.apply(penalty);
            let grid = contour_grid(
                &params,
                &penalty,
                &cmd.c_values,
                cmd.n_ctx,
                (cmd.min, cmd.max),
                cmd.resolution,
            )?;
            match cmd.out_format {
                FormatArg::Csv => {
                    let mut buf = Vec::new();
                    grid.write_csv(&mut buf)?;
                    write_output(&cmd.out, &String::from_utf8(buf).expect("csv is utf-8"))
                }
                FormatArg::Json => {
                    let artifact = serde_json::json!({
                        "params": params,
                        "penalty": penalty,
                        "grid": grid,
                    });
                    write_output(&cmd.out, &(serde_json::to_string_pretty(&artifact)? + "\n"))
                }
            }
        }
        Command::Synth(cmd) => {
            let (params, penalty) = load_params(&cmd.params)?;
            let penalty = cmd.penalty.apply(penalty);
            let design: Vec<(f64, f64, u64)> = match (cmd.design_builtin, &cmd.design) {
                (Some(task), _) => builtin_dataset(task.into())
                    .iter()
                    .map(|p| (p.compute, p.n_pmt, p.n_ctx))
                    .collect(),
                (None, Some(path)) => {
                    let file = fs::File::open(path)
                        .with_context(|| format!("opening design {}", path.display()))?;
                    parse_points(file, infer_format(path))?
                        .iter()
                        .map(|p| (p.compute, p.n_pmt, p.n_ctx))
                        .collect()
                }
                (None, None) => {
                    anyhow::bail!("one of --design-builtin or --design is required")
                }
            };
            let seed = match cmd.seed {
                Some(seed) => seed,
                None => match std::env::var("CTXSCALE_SEED") {
                    Ok(env_seed) => env_seed
                        .parse()
                        .with_context(|| format!("CTXSCALE_SEED = `{env_seed}` is not a u64"))?,
                    Err(_) => 0,
                },
            };
            let points = synthetic_generate(&params, &penalty, &design, cmd.noise_sd, seed)?;
            match cmd.out_format {
                FormatArg::Csv => {
                    let mut buf = Vec::new();
                    write_points_csv(&mut buf, &points)?;
                    write_output(&cmd.out, &String::from_utf8(buf).expect("csv is utf-8"))
                }
                FormatArg::Json => {
                    let artifact = serde_json::json!({
                        "seed": seed,
                        "noise_sd": cmd.noise_sd,
                        "params": params,
                        "penalty": penalty,
                        "points": points,
                    });
                    write_output(&cmd.out, &(serde_json::to_string_pretty(&artifact)? + "\n"))
                }
            }
        }
        Command::Builtin(cmd) => {
            let points = builtin_dataset(cmd.task.into());
            let mut buf = Vec::new();
            write_points_csv(&mut buf, &points)?;
            write_output(&cmd.out, &String::from_utf8(buf).expect("csv is utf-8"))
        }
    }
}

/// Accepts either a fit artifact (parameters plus config echo) or a bare
/// parameter object; the artifact also supplies its penalty settings.
fn load_params(path: &Path) -> Result<(ScalingParams, PenaltyConfig)> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading params {}", path.display()))?;
    if let Ok(artifact) = FitResult::from_json(&text) {
        return Ok((artifact.params, artifact.config_echo.penalty));
    }
    let params: ScalingParams = serde_json::from_str(&text).with_context(|| {
        format!(
            "{} is neither a fit artifact nor a parameter object",
            path.display()
        )
    })?;
    params.validate()?;
    Ok((params, PenaltyConfig::default()))
}

fn infer_format(path: &Path) -> RecordFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => RecordFormat::Json,
        _ => RecordFormat::Csv,
    }
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, content).with_context(|| format!("writing {}", path.display()))?
        }
        None => io::stdout().write_all(content.as_bytes())?,
    }
    Ok(())
}
