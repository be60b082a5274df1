//! Command-line front end.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::bench::{run_bench, BenchConfig};
use crate::engine::{Engine, EngineConfig};
use crate::error::{Error, Result};
use crate::memory::{read_snapshot, write_snapshot};
use crate::metrics::{evaluate, GtMode};
use crate::streams::{self, open_stream, read_results, read_stream, ResultsWriter, StabilityConfig, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SCHEMA: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "memtrack", version, about = "Online open-world identity tracking over descriptor streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the engine over a detection stream.
    Track(TrackArgs),
    /// Score a results file against the labelled stream.
    Eval(EvalArgs),
    /// Generate a synthetic detection stream.
    Synth(SynthArgs),
    /// Run the one-dimensional stability simulation.
    Stability(StabilityArgs),
    /// Measure engine throughput.
    Bench(BenchArgs),
}

/// Engine overrides. Unset flags fall back to the config file, then to the
/// built-in defaults.
#[derive(Debug, Default, Args)]
pub struct EngineFlags {
    /// Flat TOML file with engine settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub rho_bar: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub e_bar: Option<f64>,
    #[arg(long)]
    pub capacity: Option<usize>,
    #[arg(long)]
    pub tau_abs: Option<f64>,
    #[arg(long)]
    pub confirm_consecutive: Option<u32>,
    #[arg(long)]
    pub confirm_window: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use descriptors as given instead of L2-normalizing them.
    #[arg(long)]
    pub no_normalize: bool,
}

impl EngineFlags {
    pub fn resolve(&self) -> Result<EngineConfig> {
        let mut c: EngineConfig = match &self.config {
            Some(p) => load_toml(p)?,
            None => EngineConfig::default(),
        };
        macro_rules! apply {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        apply!(rho_bar, alpha, e_bar, capacity, tau_abs, confirm_consecutive, confirm_window, dim, seed);
        if self.no_normalize {
            c.normalize = false;
        }
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Detection stream.
    #[arg(long)]
    pub input: PathBuf,
    /// Results file, one record per frame.
    #[arg(long)]
    pub output: PathBuf,
    /// Final memory snapshot; defaults to the results path with `.memory` appended.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Start from a saved memory snapshot instead of an empty memory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub engine: EngineFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Labelled detection stream the results were produced from.
    #[arg(long)]
    pub input: PathBuf,
    /// Results file written by `track`.
    #[arg(long)]
    pub results: PathBuf,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "key")]
    pub gt_mode: GtModeArg,
    /// Emit the report as one JSON record instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum GtModeArg {
    Key,
    Iou,
}

impl From<GtModeArg> for GtMode {
    fn from(m: GtModeArg) -> Self {
        match m {
            GtModeArg::Key => GtMode::Key,
            GtModeArg::Iou => GtMode::Iou,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    /// TOML file with generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub identities: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub frames: Option<u64>,
    #[arg(long)]
    pub miss_rate: Option<f64>,
    #[arg(long)]
    pub clutter_rate: Option<f64>,
    #[arg(long)]
    pub min_separation_deg: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Omit bounding boxes.
    #[arg(long)]
    pub no_boxes: bool,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// Output directory for histogram and trace files.
    #[arg(long)]
    pub output: PathBuf,
    /// TOML file with simulation settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated offsets between the two source means.
    #[arg(long, value_delimiter = ',')]
    pub offsets: Option<Vec<f64>>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub bin_width: Option<f64>,
    #[arg(long)]
    pub rho_bar: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub e_bar: Option<f64>,
    #[arg(long)]
    pub capacity: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Stored exemplars.
    #[arg(long, default_value_t = 50_000)]
    pub memory: usize,
    /// Observations per frame.
    #[arg(long, default_value_t = 10)]
    pub observations: usize,
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    /// Frames per timed run.
    #[arg(long, default_value_t = 20)]
    pub frames: u64,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the JSON report here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn json_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("value serializes")
}

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        "schema" => EXIT_SCHEMA,
        "config" => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn error_record(kind: &str, message: &str) -> String {
    json_line(&serde_json::json!({ "error": kind, "message": message }))
}

/// Parses arguments and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return EXIT_OK;
            }
            let _ = write!(stderr, "{e}");
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            let _ = writeln!(stderr, "{}", error_record("usage", &first));
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            let _ = writeln!(stderr, "{}", error_record(err.kind(), &err.to_string()));
            exit_code(&err)
        }
    }
}

fn dispatch(cmd: Command, stdout: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Track(a) => track(&a, stdout),
        Command::Eval(a) => eval(&a, stdout),
        Command::Synth(a) => synth(&a, stdout),
        Command::Stability(a) => stability(&a, stdout),
        Command::Bench(a) => bench(&a, stdout),
    }
}

fn default_snapshot_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".memory");
    PathBuf::from(s)
}

fn track(a: &TrackArgs, stdout: &mut dyn Write) -> Result<()> {
    let reader = open_stream(&a.input)?;
    let dim = reader.header().dimension;
    let mut config = a.engine.resolve()?;
    if config.dim == 0 {
        config.dim = dim;
    } else if config.dim != dim {
        return Err(Error::Schema(format!(
            "stream dimension {dim} does not match configured dimension {}",
            config.dim
        )));
    }
    let mut engine = match &a.resume {
        Some(p) => {
            let store = read_snapshot(BufReader::new(File::open(p)?), config.e_bar, config.normalize)?;
            Engine::from_store(config, store)?
        }
        None => Engine::new(config)?,
    };
    let mut writer = ResultsWriter::new(BufWriter::new(File::create(&a.output)?))?;
    let mut frames = 0u64;
    for record in reader {
        let record = record?;
        let result = engine.process_frame(record.frame, &record.observations())?;
        writer.write(&result)?;
        frames += 1;
    }
    writer.finish()?;
    let snap = a.snapshot.clone().unwrap_or_else(|| default_snapshot_path(&a.output));
    let mut out = BufWriter::new(File::create(&snap)?);
    write_snapshot(engine.store(), &mut out)?;
    let confirmed = engine
        .tracks()
        .values()
        .filter(|t| t.status == crate::engine::TrackStatus::Confirmed)
        .count();
    writeln!(
        stdout,
        "{}",
        json_line(&serde_json::json!({
            "frames": frames,
            "confirmed_identities": confirmed,
            "memory_size": engine.store().len(),
            "results": a.output,
            "snapshot": snap,
        }))
    )?;
    Ok(())
}

fn eval(a: &EvalArgs, stdout: &mut dyn Write) -> Result<()> {
    let (_, stream) = read_stream(&a.input)?;
    let results = read_results(&a.results)?;
    let report = evaluate(&stream, &results, a.gt_mode.into())?;
    let body = if a.json {
        format!("{}\n", report.to_json_line())
    } else {
        report.to_text()
    };
    match &a.output {
        Some(p) => fs::write(p, body)?,
        None => stdout.write_all(body.as_bytes())?,
    }
    Ok(())
}

fn synth(a: &SynthArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut c: SynthConfig = match &a.config {
        Some(p) => load_toml(p)?,
        None => SynthConfig::default(),
    };
    if let Some(v) = a.identities {
        c.identities = v;
    }
    if let Some(v) = a.dim {
        c.dimension = v;
    }
    if let Some(v) = a.sigma {
        c.sigma = v;
    }
    if let Some(v) = a.frames {
        c.frames = v;
    }
    if let Some(v) = a.miss_rate {
        c.miss_rate = v;
    }
    if let Some(v) = a.clutter_rate {
        c.clutter_rate = v;
    }
    if let Some(v) = a.min_separation_deg {
        c.min_separation_deg = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if a.no_boxes {
        c.boxes = false;
    }
    let s = streams::synth_stream(&c)?;
    streams::write_stream(&a.output, &s.header, &s.frames)?;
    writeln!(
        stdout,
        "{}",
        json_line(&serde_json::json!({
            "frames": s.frames.len(),
            "identities": s.means.len(),
            "min_separation_deg": s.min_separation_deg,
            "presence": s.presence,
            "output": a.output,
        }))
    )?;
    Ok(())
}

fn stability(a: &StabilityArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut c: StabilityConfig = match &a.config {
        Some(p) => load_toml(p)?,
        None => StabilityConfig::default(),
    };
    if let Some(v) = &a.offsets {
        c.offsets = v.clone();
    }
    macro_rules! apply {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { c.$f = v; })* };
    }
    apply!(iterations, bin_width, rho_bar, alpha, e_bar, capacity, seed);
    let runs = streams::stability_sim(&c)?;
    fs::create_dir_all(&a.output)?;
    let mut hist = BufWriter::new(File::create(a.output.join("histograms.jsonl"))?);
    let mut traces = BufWriter::new(File::create(a.output.join("traces.jsonl"))?);
    for r in &runs {
        writeln!(hist, "{}", json_line(&serde_json::json!({ "offset": r.offset, "histogram": r.histogram })))?;
        for t in &r.traces {
            writeln!(
                traces,
                "{}",
                json_line(&serde_json::json!({
                    "offset": r.offset,
                    "key": t.key,
                    "identity": t.identity,
                    "points": t.points,
                }))
            )?;
        }
        writeln!(
            stdout,
            "{}",
            json_line(&serde_json::json!({
                "offset": r.offset,
                "distinctive_id": r.distinctive_id,
                "l1_distinctive": r.l1_distinctive,
                "l1_other": r.l1_other,
                "l1_uniform": r.l1_uniform,
                "samples": r.histogram.samples,
                "cross_assignments": r.cross_assignments,
                "stray_assignments": r.stray_assignments,
                "identities_created": r.identities_created,
                "memory_size": r.memory_size,
                "pass": r.passes(),
            }))
        )?;
    }
    hist.flush()?;
    traces.flush()?;
    Ok(())
}

fn bench(a: &BenchArgs, stdout: &mut dyn Write) -> Result<()> {
    let report = run_bench(&BenchConfig {
        memory: a.memory,
        observations: a.observations,
        dim: a.dim,
        frames: a.frames,
        runs: a.runs,
        seed: a.seed,
    })?;
    let line = json_line(&report);
    if let Some(p) = &a.output {
        fs::write(p, format!("{line}\n"))?;
    }
    writeln!(stdout, "{line}")?;
    Ok(())
}

/// Entry point used by the binary.
pub fn main_with_env() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
