//! Command-line frontend.
//!
//! Every subcommand writes one machine-readable document to stdout. Failures
//! print a single-line JSON error object to stdout, a plain message to stderr,
//! and exit with 1 (validation or domain error) or 2 (I/O error).

use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::io::{
    emit_frontier_grid, read_law, read_records, write_frontier_csv, write_records, write_report,
    FitReport, LawRegistry, ReadMode,
};
use crate::lawcore::{evaluate, evaluate_runtime, CompressionLaw, Law, MetricKind};
use crate::planner::{plan, CandidateModel, PlanRequest, SkippedCandidate, DEFAULT_MAX_RATIO};
use crate::recovery::{analyze, classify_regime, critical_ratio, Regime, RecoveryQuery};
use crate::regress::{fit_law, FitForm};
use crate::synth::{generate, SyntheticConfig, DEFAULT_NOISE_STD};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "compresslaw",
    version,
    about = "Fit, evaluate and plan with compression laws for pruned language models"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a law to experiment records and print a fit report
    Fit(FitArgs),
    /// Predict compressed-model performance from a law
    Predict(PredictArgs),
    /// Classify the recovery regime and compute the critical compression ratio
    Critical(CriticalArgs),
    /// Minimum fine-tuning data size needed to meet a recovery threshold
    MinRft(MinRftArgs),
    /// Rank base models for a compressed-parameter budget
    Plan(PlanArgs),
    /// Generate synthetic experiment records from a known law
    Synth(SynthArgs),
    /// Emit a long-format prediction table over an (l0, r, d) grid
    Frontier(FrontierArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormArg {
    Full,
    Ratio,
    Data,
    Runtime,
}

impl From<FormArg> for FitForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Full => FitForm::Full,
            FormArg::Ratio => FitForm::RatioOnly,
            FormArg::Data => FitForm::DataOnly,
            FormArg::Runtime => FitForm::Runtime,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Accuracy,
    Loss,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Accuracy => MetricKind::Accuracy,
            MetricArg::Loss => MetricKind::Loss,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct FitArgs {
    /// Records CSV (model_id,metric,l0,r,d,l); `-` reads stdin
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Law form to fit
    #[arg(long, value_enum, default_value = "full")]
    form: FormArg,
    /// Smoothing constant in 1 + 1/(D + epsilon)
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Skip invalid rows instead of aborting (skipped rows become warnings)
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct PredictArgs {
    /// Law document or fit report; `-` reads stdin
    #[arg(long, value_name = "PATH")]
    law: PathBuf,
    /// Base-model performance (ignored for runtime laws)
    #[arg(long)]
    l0: Option<f64>,
    /// Compression ratio in [0, 1)
    #[arg(long)]
    r: f64,
    /// Fine-tuning data size (ignored for runtime laws)
    #[arg(long, default_value_t = 0.0)]
    d: f64,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct CriticalArgs {
    /// Exponent of (1 + r)
    #[arg(long)]
    beta: f64,
    /// Recovery threshold on L / L0^alpha
    #[arg(long)]
    sigma: f64,
    #[arg(long, value_enum)]
    metric: MetricArg,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct MinRftArgs {
    /// Law document or fit report; `-` reads stdin
    #[arg(long, value_name = "PATH")]
    law: PathBuf,
    /// Recovery threshold on L / L0^alpha
    #[arg(long)]
    sigma: f64,
    /// Compression ratio in [0, 1)
    #[arg(long)]
    r: f64,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct PlanArgs {
    /// Law registry JSON; `-` reads stdin
    #[arg(long, value_name = "PATH")]
    registry: PathBuf,
    /// Target parameter count after compression
    #[arg(long)]
    budget: f64,
    /// Fine-tuning data size available
    #[arg(long, default_value_t = 0.0)]
    d: f64,
    #[arg(long, value_enum)]
    metric: MetricArg,
    /// Registry method tag to plan over
    #[arg(long, default_value = "calibration-free")]
    method: String,
    /// Reject candidates needing a ratio at or above this cap
    #[arg(long, default_value_t = DEFAULT_MAX_RATIO)]
    max_ratio: f64,
    /// Base-model performance for a model, overriding the registry (repeatable)
    #[arg(long = "l0", value_name = "MODEL=VALUE")]
    l0: Vec<String>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct SynthArgs {
    /// Law document for the generating law
    #[arg(long, value_name = "PATH")]
    truth: PathBuf,
    /// Grid JSON: {"l0": [...], "r": [...], "d": [...]}
    #[arg(long, value_name = "PATH")]
    grid: PathBuf,
    /// Standard deviation of Gaussian noise on ln l
    #[arg(long, default_value_t = DEFAULT_NOISE_STD)]
    noise_std: f64,
    /// Seed of the xoshiro256++ generator
    #[arg(long)]
    seed: u64,
    /// Output CSV; `-` writes stdout
    #[arg(long, value_name = "PATH", default_value = "-")]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct FrontierArgs {
    /// Law document or fit report; `-` reads stdin
    #[arg(long, value_name = "PATH")]
    law: PathBuf,
    /// Comma-separated base-model performances
    #[arg(long, value_delimiter = ',', required = true)]
    l0_list: Vec<f64>,
    /// Comma-separated compression ratios
    #[arg(long, value_delimiter = ',', required = true)]
    r_grid: Vec<f64>,
    /// Comma-separated fine-tuning data sizes
    #[arg(long, value_delimiter = ',', required = true)]
    d_grid: Vec<f64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    l0: Vec<f64>,
    r: Vec<f64>,
    d: Vec<f64>,
}

struct Streams<'a> {
    stdin: &'a mut dyn Read,
    stdout: &'a mut dyn Write,
}

impl Streams<'_> {
    fn read_text(&mut self, path: &Path) -> Result<String> {
        if path == Path::new("-") {
            let mut text = String::new();
            self.stdin.read_to_string(&mut text)?;
            return Ok(text);
        }
        fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })
    }

    fn emit_json<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        writeln!(self.stdout, "{text}")?;
        Ok(())
    }
}

/// Run with the process's standard streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdin.lock(), &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(
    args: I,
    stdin: &mut dyn Read,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{}", e.render());
                return EXIT_OK;
            }
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let message = first.trim_start_matches("error: ").to_string();
            let _ = writeln!(stdout, "{}", json!({"error": {"kind": "usage", "message": message}}));
            let _ = write!(stderr, "{rendered}");
            return EXIT_VALIDATION;
        }
    };

    let mut streams = Streams { stdin, stdout };
    match dispatch(cli.command, &mut streams, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(
                streams.stdout,
                "{}",
                json!({"error": {"kind": e.kind(), "message": e.to_string()}})
            );
            let _ = writeln!(stderr, "error: {e}");
            if e.is_io() {
                EXIT_IO
            } else {
                EXIT_VALIDATION
            }
        }
    }
}

fn dispatch(command: Command, io: &mut Streams<'_>, stderr: &mut dyn Write) -> Result<()> {
    match command {
        Command::Fit(args) => cmd_fit(args, io, stderr),
        Command::Predict(args) => cmd_predict(args, io),
        Command::Critical(args) => cmd_critical(args, io),
        Command::MinRft(args) => cmd_min_rft(args, io),
        Command::Plan(args) => cmd_plan(args, io, stderr),
        Command::Synth(args) => cmd_synth(args, io),
        Command::Frontier(args) => cmd_frontier(args, io),
    }
}

fn load_compression_law(io: &mut Streams<'_>, path: &Path) -> Result<CompressionLaw> {
    match read_law(&io.read_text(path)?)? {
        Law::Compression(law) => Ok(law),
        Law::Runtime(_) => Err(Error::InvalidParameter(format!(
            "{} holds a runtime law; a compression law is required",
            path.display()
        ))),
    }
}

fn cmd_fit(args: FitArgs, io: &mut Streams<'_>, stderr: &mut dyn Write) -> Result<()> {
    let text = io.read_text(&args.input)?;
    let mode = if args.lenient { ReadMode::Lenient } else { ReadMode::Strict };
    let outcome = read_records(text.as_bytes(), mode)?;
    let mut report: FitReport = fit_law(&outcome.records, args.epsilon, args.form.into())?.into();
    for rejected in &outcome.rejected {
        report.warnings.push(format!("skipped {rejected}"));
    }
    for w in &report.warnings {
        writeln!(stderr, "warning: {w}")?;
    }
    writeln!(io.stdout, "{}", write_report(&report)?)?;
    Ok(())
}

fn cmd_predict(args: PredictArgs, io: &mut Streams<'_>) -> Result<()> {
    let law = read_law(&io.read_text(&args.law)?)?;
    let prediction = match &law {
        Law::Compression(l) => {
            let l0 = args
                .l0
                .ok_or_else(|| Error::InvalidParameter("--l0 is required for compression laws".into()))?;
            evaluate(l, l0, args.r, args.d)?
        }
        Law::Runtime(l) => evaluate_runtime(l, args.r)?,
    };
    io.emit_json(&json!({
        "metric": law.metric(),
        "l0": args.l0,
        "r": args.r,
        "d": args.d,
        "prediction": prediction,
    }))
}

fn cmd_critical(args: CriticalArgs, io: &mut Streams<'_>) -> Result<()> {
    let metric = args.metric.into();
    let class = classify_regime(args.beta, args.sigma, metric)?;
    let r_critical = match class.regime {
        Regime::AlwaysRecoverable => None,
        Regime::ConditionallyRecoverable => Some(critical_ratio(args.beta, args.sigma, metric)?),
    };
    io.emit_json(&json!({
        "metric": metric,
        "beta": args.beta,
        "sigma": args.sigma,
        "regime": class.regime,
        "boundary": class.boundary,
        "r_critical": r_critical,
    }))
}

fn cmd_min_rft(args: MinRftArgs, io: &mut Streams<'_>) -> Result<()> {
    let law = load_compression_law(io, &args.law)?;
    let analysis = analyze(&RecoveryQuery {
        law,
        sigma: args.sigma,
        r: args.r,
    })?;
    io.emit_json(&json!({
        "sigma": args.sigma,
        "r": args.r,
        "regime": analysis.regime,
        "boundary": analysis.boundary,
        "r_critical": analysis.r_critical,
        "min_d": analysis.min_d,
    }))
}

fn parse_l0_overrides(raw: &[String]) -> Result<Vec<(String, f64)>> {
    raw.iter()
        .map(|s| {
            let (model, value) = s.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("--l0 expects MODEL=VALUE, got `{s}`"))
            })?;
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::InvalidParameter(format!("--l0 value for `{model}` is not a number"))
            })?;
            Ok((model.trim().to_string(), value))
        })
        .collect()
}

fn cmd_plan(args: PlanArgs, io: &mut Streams<'_>, stderr: &mut dyn Write) -> Result<()> {
    let registry = LawRegistry::from_json(&io.read_text(&args.registry)?)?;
    let metric: MetricKind = args.metric.into();
    let overrides = parse_l0_overrides(&args.l0)?;

    let mut candidates = Vec::new();
    let mut skipped = Vec::new();
    for entry in registry.entries() {
        if entry.metric != metric || entry.method != args.method {
            continue;
        }
        let Law::Compression(law) = &entry.law else { continue };
        let l0 = overrides
            .iter()
            .rev()
            .find(|(m, _)| *m == entry.model_id)
            .map(|(_, v)| *v)
            .or(entry.l0);
        let missing = match (entry.param_count, l0) {
            (None, _) => Some("registry entry has no param_count"),
            (_, None) => Some("no base performance; pass --l0 MODEL=VALUE"),
            _ => None,
        };
        if let Some(reason) = missing {
            skipped.push(SkippedCandidate {
                model_id: entry.model_id.clone(),
                reason: reason.to_string(),
            });
            continue;
        }
        let runtime_law = registry
            .get(&entry.model_id, MetricKind::Runtime, &args.method)
            .and_then(|e| match &e.law {
                Law::Runtime(rt) => Some(rt.clone()),
                Law::Compression(_) => None,
            });
        candidates.push(CandidateModel {
            model_id: entry.model_id.clone(),
            param_count: entry.param_count.unwrap_or_default(),
            l0: l0.unwrap_or_default(),
            law: law.clone(),
            runtime_law,
        });
    }
    if candidates.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no {metric} entries with method `{}` have both param_count and l0",
            args.method
        )));
    }

    let request = PlanRequest {
        budget: args.budget,
        rft_size: args.d,
        metric,
        max_ratio: args.max_ratio,
    };
    let mut result = plan(&candidates, &request)?;
    result.skipped.extend(skipped);
    result.skipped.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    for entry in result.ranked.iter().filter(|e| e.extrapolated) {
        writeln!(
            stderr,
            "warning: {} at ratio {:.4} is outside the fitted range",
            entry.model_id, entry.required_ratio
        )?;
    }

    match args.format {
        Format::Json => io.emit_json(&result),
        Format::Csv => {
            let mut wtr = csv::Writer::from_writer(&mut *io.stdout);
            wtr.write_record(["rank", "model_id", "required_ratio", "predicted_performance", "predicted_runtime_factor", "extrapolated"])?;
            for (i, e) in result.ranked.iter().enumerate() {
                wtr.write_record([
                    (i + 1).to_string(),
                    e.model_id.clone(),
                    e.required_ratio.to_string(),
                    e.predicted_performance.to_string(),
                    e.predicted_runtime_factor.map(|v| v.to_string()).unwrap_or_default(),
                    e.extrapolated.to_string(),
                ])?;
            }
            wtr.flush()?;
            Ok(())
        }
    }
}

fn cmd_synth(args: SynthArgs, io: &mut Streams<'_>) -> Result<()> {
    let truth = load_compression_law(io, &args.truth)?;
    let grid: GridSpec = serde_json::from_str(&io.read_text(&args.grid)?)?;
    let records = generate(&SyntheticConfig {
        truth,
        l0_values: grid.l0,
        r_values: grid.r,
        d_values: grid.d,
        noise_std: args.noise_std,
        seed: args.seed,
    })?;
    if args.out == Path::new("-") {
        write_records(&mut *io.stdout, &records)
    } else {
        let file = fs::File::create(&args.out).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", args.out.display())))
        })?;
        write_records(file, &records)
    }
}

fn cmd_frontier(args: FrontierArgs, io: &mut Streams<'_>) -> Result<()> {
    let law = load_compression_law(io, &args.law)?;
    let rows = emit_frontier_grid(&law, &args.l0_list, &args.r_grid, &args.d_grid)?;
    match args.format {
        Format::Json => io.emit_json(&json!({ "rows": rows })),
        Format::Csv => write_frontier_csv(&mut *io.stdout, &rows),
    }
}

/// Long help of the top-level command and every subcommand, for golden tests.
pub fn help_texts() -> Vec<(String, String)> {
    use clap::CommandFactory;
    let mut root = Cli::command();
    root.build();
    let mut out = vec![("compresslaw".to_string(), root.render_long_help().to_string())];
    for sub in root.get_subcommands_mut() {
        out.push((sub.get_name().to_string(), sub.render_long_help().to_string()));
    }
    out
}
