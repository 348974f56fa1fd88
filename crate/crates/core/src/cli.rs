//! The `nilm` command line.
//!
//! Exit status is 0 on success, 1 for invalid arguments or data, 2 for I/O
//! failures.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::engine::{disaggregate_beam, DisaggregationResult, EngineParams};
use crate::error::{Error, Result};
use crate::eval::{score, Truth, DEFAULT_MATCH_WINDOW};
use crate::ingest::{self, read_signal_csv, write_signal_csv, Channel, EMONTX_RATE_HZ};
use crate::model::{read_library, write_library, DeviceModel};
use crate::scenario::Scenario;
use crate::sysid::{identify_device, PlugRecordingLabel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "nilm", version, about = "Energy disaggregation with LTI device models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a scenario into aggregate and per-device truth CSVs
    Simulate(SimulateArgs),
    /// Identify a device model from a plug recording and append it to a library
    Identify(IdentifyArgs),
    /// Disaggregate an aggregate signal with a device library
    Disaggregate(DisaggregateArgs),
    /// Score a disaggregation result against a scenario's ground truth
    Evaluate(EvaluateArgs),
    /// Write measured, estimated and per-device series as long-format CSV
    PlotData(PlotDataArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario JSON file
    #[arg(long, conflicts_with = "paper", required_unless_present = "paper")]
    scenario: Option<PathBuf>,
    /// Five random third-order devices on the reference overlapping schedule
    #[arg(long)]
    paper: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Library resolving `model_ref` entries of the scenario file
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct IdentifyArgs {
    /// Plug recording: signal CSV (`k,value`), or emonTx CSV with --emontx
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    emontx: bool,
    #[arg(long, default_value = "irms")]
    channel: Channel,
    /// Device name; defaults to the input file stem
    #[arg(long)]
    name: Option<String>,
    /// On threshold; defaults to 10% of the recording's peak
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 2)]
    settle_skip: usize,
    #[arg(long, default_value_t = 3)]
    na: usize,
    #[arg(long, default_value_t = 3)]
    nb: usize,
    #[arg(long, default_value_t = 1)]
    delay: usize,
    /// Prior on the largest steady output; defaults to 1.25 × observed peak
    #[arg(long)]
    max_output: Option<f64>,
    /// Library file to append to (created if missing)
    #[arg(long, default_value = "library.json")]
    library: PathBuf,
}

#[derive(Debug, Args)]
struct EngineArgs {
    /// Residual band; defaults to 5 × estimated noise std
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 2)]
    persistence: usize,
    #[arg(long, default_value_t = 15)]
    lookahead: usize,
    #[arg(long, default_value_t = 5)]
    backtrack: usize,
    #[arg(long, default_value_t = 3)]
    min_on: usize,
    #[arg(long, default_value_t = 0.0)]
    min_level: f64,
    #[arg(long, default_value_t = 1)]
    beam_width: usize,
}

impl EngineArgs {
    fn params(&self) -> EngineParams {
        EngineParams {
            deviation_threshold: self.threshold,
            persistence: self.persistence,
            lookahead: self.lookahead,
            backtrack_window: self.backtrack,
            min_on_duration: self.min_on,
            min_level: self.min_level,
            beam_width: self.beam_width,
        }
    }
}

#[derive(Debug, Args)]
struct DisaggregateArgs {
    #[arg(long)]
    library: PathBuf,
    /// Aggregate signal CSV
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    sample_period: f64,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Directory written by `disaggregate`
    #[arg(long)]
    result: PathBuf,
    /// Scenario JSON holding the ground truth
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MATCH_WINDOW)]
    match_window: usize,
    #[arg(long, default_value_t = 1.0)]
    sample_period: f64,
    /// Metrics JSON path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotDataArgs {
    #[arg(long)]
    result: PathBuf,
    /// The measured aggregate the result was computed from
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    sample_period: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Run the command line with `argv` (program name first) and return the exit code.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(argv) {
        Ok(p) => p,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(parsed.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                EXIT_IO
            } else {
                EXIT_INVALID
            }
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Identify(a) => identify(a),
        Command::Disaggregate(a) => run_disaggregate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::PlotData(a) => plot_data(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_library(path: Option<&Path>) -> Result<Vec<DeviceModel>> {
    path.map_or(Ok(Vec::new()), read_library)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let scenario = match &a.scenario {
        Some(path) => Scenario::read(path, &load_library(a.library.as_deref())?)?,
        None => Scenario::paper_simulation(a.seed)?,
    };
    let rendered = scenario.render()?;
    create_dir(&a.out)?;
    write_text(&a.out.join("scenario.json"), &scenario.to_json()?)?;
    write_library(a.out.join("library.json"), &scenario.models)?;
    write_signal_csv(a.out.join("aggregate.csv"), &rendered.aggregate)?;
    for (i, y) in rendered.truth_outputs.iter().enumerate() {
        write_signal_csv(a.out.join(format!("truth_{}.csv", i + 1)), y)?;
    }
    println!(
        "wrote {} devices, {} samples to {}",
        scenario.models.len(),
        scenario.horizon,
        a.out.display()
    );
    Ok(())
}

fn identify(a: IdentifyArgs) -> Result<()> {
    let signal = if a.emontx {
        let records = ingest::parse_emontx_csv(&a.input)?;
        ingest::to_signal(&records, a.channel, EMONTX_RATE_HZ)?.signal
    } else {
        read_signal_csv(&a.input, 1.0)?
    };
    let name = a.name.clone().unwrap_or_else(|| {
        a.input
            .file_stem()
            .map_or_else(|| "device".to_string(), |s| s.to_string_lossy().into_owned())
    });
    let peak = signal.values().iter().copied().fold(0.0, f64::max);
    let threshold = a.threshold.unwrap_or(0.1 * peak);
    let label = PlugRecordingLabel::new(name.clone(), threshold, a.settle_skip)?;
    let mut model = identify_device(&signal, &label, a.na, a.nb, a.delay)?;
    if a.max_output.is_some() {
        model = model.with_max_output(a.max_output)?;
    }

    let mut library = if a.library.exists() {
        read_library(&a.library)?
    } else {
        Vec::new()
    };
    if library.iter().any(|m| m.name() == name) {
        return Err(Error::Validation(format!(
            "library {} already has a device named `{name}`",
            a.library.display()
        )));
    }
    let gain = model.dc_gain()?;
    println!(
        "identified `{name}`: order {}, DC gain {gain}, instant_off {}",
        model.order(),
        model.instant_off()
    );
    library.push(model);
    write_library(&a.library, &library)
}

fn run_disaggregate(a: DisaggregateArgs) -> Result<()> {
    let library = read_library(&a.library)?;
    let y = read_signal_csv(&a.input, a.sample_period)?;
    let result = disaggregate_beam(&y, &library, &a.engine.params())?;
    result.write_dir(&a.out)?;
    println!(
        "{} events, {} unexplained, residual rms {}",
        result.events.len(),
        result.unexplained.len(),
        result.residual_rms
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let library = load_library(a.library.as_deref())?;
    let truth = Truth::from_scenario(&Scenario::read(&a.truth, &library)?)?;
    let result = DisaggregationResult::read_dir(&a.result, a.sample_period)?;
    let metrics = score(&result, &truth, a.match_window)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_text(&a.out, &metrics.to_json()?)?;
    println!(
        "precision {} recall {} switch-time mae {}",
        metrics.precision, metrics.recall, metrics.switch_time_mae
    );
    Ok(())
}

/// Long-format rows `series,k,value` for the measurement, the total estimate
/// and each device estimate.
pub fn plot_rows(y_m: &crate::SignalSeries, result: &DisaggregationResult) -> Result<String> {
    let n = y_m.len();
    if result.total.len() != n || result.outputs.iter().any(|o| o.len() != n) {
        return Err(Error::Validation("result and measurement lengths differ".into()));
    }
    let mut out = String::from("series,k,value\n");
    let mut emit = |name: &str, s: &crate::SignalSeries| {
        for (k, v) in s.indexed() {
            let _ = writeln!(out, "{name},{k},{v}");
        }
    };
    emit("y_m", y_m);
    emit("y_hat", &result.total);
    for (i, o) in result.outputs.iter().enumerate() {
        emit(&format!("y_hat_{}", i + 1), o);
    }
    Ok(out)
}

fn plot_data(a: PlotDataArgs) -> Result<()> {
    let y = read_signal_csv(&a.input, a.sample_period)?;
    let result = DisaggregationResult::read_dir(&a.result, a.sample_period)?;
    write_text(&a.out, &plot_rows(&y, &result)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flag_is_invalid() {
        assert_eq!(cli(["nilm", "simulate", "--bogus"]), EXIT_INVALID);
        assert_eq!(cli(["nilm"]), EXIT_INVALID);
    }

    #[test]
    fn missing_file_is_io_error() {
        let code = cli([
            "nilm",
            "disaggregate",
            "--library",
            "/nonexistent/lib.json",
            "--input",
            "/nonexistent/a.csv",
            "--out",
            "/tmp/never",
        ]);
        assert_eq!(code, EXIT_IO);
    }
}
