//! Batch driver: simulation runs, training, verification suites,
//! benchmarks and plot-data export.
//!
//! Every command writes into one output directory together with a
//! `manifest-<command>.json` that records the full configuration, seed,
//! build version and timing. Exit codes are stable: 0 success, 1 a
//! verification suite found violations, 2 usage, configuration or runtime
//! error.

mod bench;
mod io;
mod plots;
mod simulate;
mod train;
mod verify;

use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use slasched_core::sim::SimConfig;

pub use bench::BenchRow;
pub use simulate::SimSummary;
pub use train::Evaluation;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "SLASCHED_OUT";
/// Environment variable holding the log filter.
pub const LOG_ENV: &str = "SLASCHED_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "slasched",
    version,
    about = "Edge resource customization and service orchestration"
)]
pub struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Replaces both the simulation and the training seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 lets the runtime choose.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// `key.path=value` override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (falls back to $SLASCHED_OUT, then ./runs).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Random,
    Static,
    Checkpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Heterogeneity,
    Bandwidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Monotonicity,
    Submodularity,
    Approximation,
    Gradients,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write per-frame metrics plus a summary.
    Simulate {
        #[arg(long, value_enum, default_value_t = PolicyKind::Random)]
        policy: PolicyKind,
        /// Actor checkpoint for `--policy checkpoint`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Frames to run; defaults to `frames_per_episode`.
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long, default_value_t = 0)]
        episode: u64,
        /// Compute fraction for `--policy static`.
        #[arg(long, default_value_t = 0.5)]
        static_compute: f64,
        /// Memory fraction for `--policy static`.
        #[arg(long, default_value_t = 0.5)]
        static_memory: f64,
        /// Repeat the episode across a parameter sweep instead.
        #[arg(long, value_enum)]
        sweep: Option<SweepKind>,
    },
    /// Train actors and critics, then compare against the random policy.
    Train {
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 20)]
        eval_episodes: usize,
    },
    /// Run property suites; exit 1 on any violation.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        /// Instances per suite (200 for approximation, 100 otherwise).
        #[arg(long)]
        instances: Option<usize>,
        /// Samples per instance.
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Time channel-decomposed against merged orchestration.
    Bench {
        #[arg(long, default_value_t = 5)]
        runs: usize,
        /// Region sizes to time; defaults to the configured node count.
        #[arg(long, value_delimiter = ',')]
        nodes: Vec<usize>,
    },
    /// Turn JSON-lines metrics in a directory into tidy CSV files.
    ExportPlots { metrics_dir: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Train { .. } => "train",
            Command::Verify { .. } => "verify",
            Command::Bench { .. } => "bench",
            Command::ExportPlots { .. } => "export-plots",
        }
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Violations,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Violations => 1,
        }
    }
}

pub const EXIT_ERROR: i32 = 2;

/// Resolved settings shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: SimConfig,
    pub out: PathBuf,
    pub workers: usize,
}

impl Context {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let mut cfg = match &cli.config {
            Some(path) => SimConfig::load(path)?,
            None => SimConfig::default(),
        };
        cfg = cfg.with_overrides(&cli.overrides)?;
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
            cfg.train.seed = seed;
        }
        let out = match (&cli.out, std::env::var_os(OUT_ENV)) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => PathBuf::from(p),
            (None, None) => PathBuf::from("runs"),
        };
        Ok(Context {
            cfg,
            out,
            workers: cli.workers,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub workers: usize,
    pub arguments: Vec<String>,
    pub config: SimConfig,
    pub started: String,
    pub finished: Option<String>,
    pub status: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    fn file(&self, dir: &Path) -> PathBuf {
        dir.join(format!("manifest-{}.json", self.command))
    }

    fn begin(ctx: &Context, command: &str) -> Result<Self> {
        let m = RunManifest {
            command: command.to_string(),
            version: version(),
            seed: ctx.cfg.seed,
            workers: ctx.workers,
            arguments: std::env::args().collect(),
            config: ctx.cfg.clone(),
            started: chrono::Utc::now().to_rfc3339(),
            finished: None,
            status: "running".into(),
            outputs: Vec::new(),
        };
        m.write(&ctx.out)?;
        Ok(m)
    }

    fn finish(mut self, dir: &Path, status: &str, outputs: Vec<PathBuf>) -> Result<()> {
        self.finished = Some(chrono::Utc::now().to_rfc3339());
        self.status = status.to_string();
        self.outputs = outputs;
        self.write(dir)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        io::write_json(&self.file(dir), self)
    }
}

/// Package version with the `git describe` suffix when available.
pub fn version() -> String {
    let pkg = env!("CARGO_PKG_VERSION");
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|d| format!("{pkg}-{}", d.trim()))
        .unwrap_or_else(|| pkg.to_string())
}

/// What a command produced.
pub(crate) struct Report {
    pub outcome: Outcome,
    pub outputs: Vec<PathBuf>,
}

/// Runs a parsed command inside a thread pool bounded by `--workers`.
pub fn run(cli: Cli) -> Result<Outcome> {
    let ctx = Context::from_cli(&cli)?;
    std::fs::create_dir_all(&ctx.out)
        .with_context(|| format!("cannot create output directory {}", ctx.out.display()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.workers)
        .build()?;
    let manifest = RunManifest::begin(&ctx, cli.command.name())?;
    let result = pool.install(|| dispatch(&ctx, &cli.command));
    match result {
        Ok(report) => {
            let status = match report.outcome {
                Outcome::Success => "ok",
                Outcome::Violations => "violations",
            };
            manifest.finish(&ctx.out, status, report.outputs)?;
            Ok(report.outcome)
        }
        Err(e) => {
            manifest.finish(&ctx.out, "failed", Vec::new())?;
            Err(e)
        }
    }
}

fn dispatch(ctx: &Context, command: &Command) -> Result<Report> {
    match command {
        Command::Simulate {
            policy,
            checkpoint,
            frames,
            episode,
            static_compute,
            static_memory,
            sweep,
        } => {
            let opts = simulate::Options {
                policy: *policy,
                checkpoint: checkpoint.clone(),
                frames: frames.unwrap_or(ctx.cfg.frames_per_episode),
                episode: *episode,
                static_fractions: (*static_compute, *static_memory),
            };
            match sweep {
                None => simulate::simulate(ctx, &opts),
                Some(kind) => simulate::sweep(ctx, &opts, *kind),
            }
        }
        Command::Train {
            episodes,
            eval_episodes,
        } => train::train(ctx, *episodes, *eval_episodes),
        Command::Verify {
            suite,
            instances,
            samples,
        } => verify::verify(ctx, *suite, *instances, *samples),
        Command::Bench { runs, nodes } => bench::bench(ctx, *runs, nodes),
        Command::ExportPlots { metrics_dir } => plots::export(ctx, metrics_dir),
    }
}

/// Parses `args` (program name first) and runs them, returning the exit
/// code. Usage errors print to stderr and map to 2.
pub fn run_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { 0 };
        }
    };
    match run(cli) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
