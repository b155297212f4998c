//! Command-line pipeline: events to scores, panel assembly, estimation,
//! decomposition, bootstrap inference and growth accounting.
//!
//! Settings come from built-in defaults, then an optional JSON config file
//! (`--config`), then command-line flags, with later sources winning. Any
//! config field can be set with `--set dotted.path=value`.
//!
//! Exit status: 0 success, 1 configuration error, 2 data error, 3 numerical
//! failure.

pub mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use geogrowth::infer::Scheme;
use geogrowth::lp::Bandwidth;
use geogrowth::panel::GroupKey;
use geogrowth::{Error, ErrorKind, Result};

pub use commands::{execute, Command};
pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "geogrowth", version, about = "Relation indices and panel impulse responses")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for bootstrap and simulation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Config override, `dotted.path=value`; may repeat.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,

    #[arg(long, global = true)]
    pub events: Option<PathBuf>,
    #[arg(long, global = true)]
    pub weights: Option<PathBuf>,
    #[arg(long, global = true)]
    pub sanctions: Option<PathBuf>,
    #[arg(long, global = true)]
    pub panel: Option<PathBuf>,
    #[arg(long, global = true)]
    pub measures: Option<PathBuf>,
    #[arg(long, global = true)]
    pub decomposition: Option<PathBuf>,

    /// Depreciation rate of the pair scores.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub outcome: Option<String>,
    /// Shock column; repeat for several shocks.
    #[arg(long = "shock", global = true)]
    pub shocks: Vec<String>,
    #[arg(long, global = true)]
    pub instrument: Option<String>,
    /// Lags of outcome and shock used as controls.
    #[arg(long, global = true)]
    pub lags: Option<u32>,
    /// Horizon range `lo:hi`.
    #[arg(long, global = true, value_parser = parse_horizons)]
    pub horizons: Option<(i32, i32)>,
    /// Fixed effects, comma separated, e.g. `country,region*year`.
    #[arg(long, global = true)]
    pub groups: Option<String>,
    /// `auto` or a lag count.
    #[arg(long, global = true)]
    pub bandwidth: Option<Bandwidth>,
    #[arg(long, global = true)]
    pub replications: Option<usize>,
    /// `country_block` or `wild_rademacher`.
    #[arg(long, global = true)]
    pub scheme: Option<Scheme>,

    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Sub {
    /// Pair scores, country indices, instrument and sanctions exposure.
    Scores,
    /// Merge measures into a country-year panel.
    Panel,
    /// Local projections.
    Lp,
    /// Instrumental-variables local projections.
    Lpiv,
    /// Dynamic panel ARDL and its response path.
    Ardl,
    /// Transitory and permanent shock responses.
    Decompose,
    /// Country-block or wild bootstrap.
    Bootstrap,
    /// Counterfactual contributions relative to the median path.
    Account,
    /// Synthetic panels or event corpora.
    Simulate,
    /// Decade effect tables.
    Stats,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Scores => Command::Scores,
            Sub::Panel => Command::Panel,
            Sub::Lp => Command::Lp,
            Sub::Lpiv => Command::Lpiv,
            Sub::Ardl => Command::Ardl,
            Sub::Decompose => Command::Decompose,
            Sub::Bootstrap => Command::Bootstrap,
            Sub::Account => Command::Account,
            Sub::Simulate => Command::Simulate,
            Sub::Stats => Command::Stats,
        }
    }
}

fn parse_horizons(s: &str) -> std::result::Result<(i32, i32), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let lo = a.trim().parse::<i32>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<i32>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let i = &mut c.inputs;
        for (slot, flag) in [
            (&mut i.events, &self.events),
            (&mut i.weights, &self.weights),
            (&mut i.sanctions, &self.sanctions),
            (&mut i.panel, &self.panel),
            (&mut i.measures, &self.measures),
            (&mut i.decomposition, &self.decomposition),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        if let Some(o) = &self.out {
            c.output = o.clone();
        }
        if let Some(seed) = self.seed {
            c.bootstrap.seed = seed;
            c.simulate.panel.seed = seed;
            c.simulate.events.seed = seed;
            c.simulate.outcome.seed = seed;
        }
        if let Some(d) = self.delta {
            c.measures.delta = d;
        }
        let e = &mut c.estimation;
        if let Some(o) = &self.outcome {
            e.outcome = o.clone();
        }
        if !self.shocks.is_empty() {
            e.shocks = self.shocks.clone();
        }
        if let Some(z) = &self.instrument {
            e.instrument = z.clone();
        }
        if let Some(l) = self.lags {
            e.lags = l;
        }
        if let Some(h) = self.horizons {
            e.horizons = h;
        }
        if let Some(g) = &self.groups {
            e.groups = g
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(str::parse::<GroupKey>)
                .collect::<Result<_>>()?;
        }
        if let Some(b) = self.bandwidth {
            e.bandwidth = b;
        }
        if let Some(r) = self.replications {
            c.bootstrap.replications = r;
        }
        if let Some(s) = self.scheme {
            c.bootstrap.scheme = s;
        }
        for a in &self.set {
            c.set(a)?;
        }
        c.validate()?;
        Ok(c)
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

/// Resolves the config and runs the command on a pool of the requested size.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    let config = cli.resolve_config()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let command = Command::from(cli.command);
    pool.install(|| execute(command, &config))
}

/// Parses arguments, runs, reports errors on stderr, and maps them to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(manifest) => {
            log::info!("wrote {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
