//! The `tunescape` command line.
//!
//! Human-readable summaries go to standard output; machine formats are
//! written only to paths given with `--out`. Exit status is 0 on success,
//! 1 on a domain error and 2 on a usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::landscape::{self, DeviceCaches, LandscapeError, PageRankOptions};
use crate::measure::{
    Aggregate, Backend, CommandBackend, CommandSpec, MeasureError, MeasurementProtocol,
    SimulatedBackend, Status,
};
use crate::paramspace::{Configuration, NeighborScheme, SearchSpace, SpecError};
use crate::store::{self, ImportOptions, StoreError, TuningCache};
use crate::strategies::{self, Budget, LocalSearchOptions, StrategyError, StrategyResult};

#[derive(Debug, Parser)]
#[command(
    name = "tunescape",
    version,
    about = "Tune parameterised kernels and analyse tuning landscapes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search a space and write the measurements to a cache.
    Tune(TuneArgs),
    /// Analyse tuning caches.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Export datasets for plotting.
    #[command(subcommand)]
    Export(ExportCommand),
    /// Convert a cache written by another tool to the native format.
    Import(ImportArgs),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Simulated(PathBuf),
    Command(String),
}

fn parse_backend(s: &str) -> Result<BackendSpec, String> {
    match s.split_once(':') {
        Some(("sim", path)) if !path.is_empty() => Ok(BackendSpec::Simulated(path.into())),
        Some(("cmd", template)) if !template.trim().is_empty() => {
            Ok(BackendSpec::Command(template.to_string()))
        }
        _ => Err("expected `sim:CACHE` or `cmd:TEMPLATE`".into()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyKind {
    Brute,
    Random,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Hamming1,
    Adjacent,
}

impl From<SchemeArg> for NeighborScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Hamming1 => NeighborScheme::Hamming1,
            SchemeArg::Adjacent => NeighborScheme::Adjacent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregateArg {
    Mean,
    Median,
    Min,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub space: PathBuf,
    /// `sim:CACHE` replays a cache, `cmd:TEMPLATE` runs a program.
    #[arg(long, value_parser = parse_backend)]
    pub backend: BackendSpec,
    #[arg(long, value_enum, default_value = "brute")]
    pub strategy: StrategyKind,
    /// Maximum evaluations; 0 means unlimited (brute force only).
    #[arg(long, default_value_t = 0)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Neighbourhood for local search; defaults to the space's scheme.
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long)]
    pub first_improvement: bool,
    /// Build command run before each configuration (command backend).
    #[arg(long)]
    pub compile: Option<String>,
    /// Device name recorded for the command backend.
    #[arg(long)]
    pub device: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub warmup: u32,
    #[arg(long, default_value_t = 7)]
    pub runs: u32,
    #[arg(long, value_enum, default_value = "mean")]
    pub aggregate: AggregateArg,
    #[arg(long, default_value_t = 60_000)]
    pub timeout_ms: u64,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Median, maximum and impact of a cache.
    Stats {
        #[arg(long)]
        cache: PathBuf,
    },
    /// Proportion of centrality of the acceptable local minima.
    Centrality {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        space: PathBuf,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        #[arg(long, default_value_t = 0.15)]
        p_max: f64,
        #[arg(long, default_value_t = 0.85)]
        damping: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Performance portability over a set of devices.
    Portability {
        /// Comma-separated cache paths, one per device.
        #[arg(long, value_delimiter = ',', required = true)]
        caches: Vec<PathBuf>,
        /// Comma-separated device names; all devices by default.
        #[arg(long, value_delimiter = ',')]
        subset: Vec<String>,
        /// Score this configuration instead of searching for the best.
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Best configurations of a cache.
    Topk {
        #[arg(long)]
        cache: PathBuf,
        #[arg(short, default_value_t = 5)]
        k: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExportCommand {
    /// Performance relative to the optimum, per configuration.
    Dist {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the quantile table here.
        #[arg(long)]
        quantiles_out: Option<PathBuf>,
    },
    /// Fitness flow graph in Graphviz format.
    Ffg {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        space: PathBuf,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImportFormat {
    External,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long, value_enum)]
    pub from: ImportFormat,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Entry field holding the performance value, e.g. `GFLOP/s`.
    #[arg(long)]
    pub metric_field: Option<String>,
    #[arg(long)]
    pub device: Option<String>,
    /// Extra failure marker, `PATTERN=STATUS`.
    #[arg(long = "marker", value_parser = parse_marker)]
    pub markers: Vec<(String, Status)>,
}

fn parse_marker(s: &str) -> Result<(String, Status), String> {
    let (pattern, status) = s.split_once('=').ok_or("expected PATTERN=STATUS")?;
    let status = status.parse::<Status>().map_err(|e| e.to_string())?;
    if status == Status::Ok {
        return Err("a failure marker cannot map to `ok`".into());
    }
    Ok((pattern.to_string(), status))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    store::write_atomic(path, text.as_bytes()).map_err(CliError::from)
}

fn load_space(path: &Path, scheme: Option<SchemeArg>) -> Result<SearchSpace, CliError> {
    let space = SearchSpace::load(path)?;
    Ok(match scheme {
        Some(s) => space.with_neighbor_scheme(s.into()),
        None => space,
    })
}

/// Parse `args` (including the program name) and run; returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match dispatch(&cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(command: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    let result = match command {
        Command::Tune(args) => tune(args, out),
        Command::Analyze(cmd) => analyze(cmd, out),
        Command::Export(cmd) => export(cmd, out),
        Command::Import(args) => import(args, out),
    };
    out.flush().map_err(|source| CliError::Io {
        path: "<stdout>".into(),
        source,
    })?;
    result
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).map_err(|source| CliError::Io { path: "<stdout>".into(), source })
    };
}

fn tune(args: &TuneArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let space = load_space(&args.space, args.scheme)?;
    let protocol = MeasurementProtocol {
        warmup_runs: args.warmup,
        benchmark_runs: args.runs,
        aggregate: match args.aggregate {
            AggregateArg::Mean => Aggregate::Mean,
            AggregateArg::Median => Aggregate::Median,
            AggregateArg::Min => Aggregate::Min,
        },
        timeout_ms: args.timeout_ms,
    };
    protocol.validate()?;
    let mut backend: Box<dyn Backend> = match &args.backend {
        BackendSpec::Simulated(path) => {
            let cache = store::read_cache(path)?;
            cache.check_space(&space)?;
            Box::new(SimulatedBackend::new(cache))
        }
        BackendSpec::Command(template) => Box::new(CommandBackend::new(
            CommandSpec {
                template: template.clone(),
                compile_template: args.compile.clone(),
                device_name: args.device.clone(),
                ..Default::default()
            },
            space.clone(),
        )?),
    };
    let budget = Budget::new(args.budget);
    let (result, mut cache) = match args.strategy {
        StrategyKind::Brute => {
            strategies::brute_force(&space, backend.as_mut(), &protocol, budget)?
        }
        StrategyKind::Random => {
            strategies::random_search(&space, backend.as_mut(), &protocol, budget, args.seed)?
        }
        StrategyKind::Local => strategies::greedy_local_search(
            &space,
            backend.as_mut(),
            &protocol,
            budget,
            args.seed,
            space.neighbor_scheme(),
            &LocalSearchOptions {
                first_improvement: args.first_improvement,
                start: None,
            },
        )?,
    };
    let strategy = match args.strategy {
        StrategyKind::Brute => "brute",
        StrategyKind::Random => "random",
        StrategyKind::Local => "local",
    };
    cache.metadata.insert("strategy".into(), strategy.into());
    cache.metadata.insert("seed".into(), args.seed.to_string());
    cache.metadata.insert("backend".into(), backend.describe());
    store::write_cache(&cache, &args.out)?;
    print_result(&result, out)
}

fn print_result(result: &StrategyResult, out: &mut dyn Write) -> Result<(), CliError> {
    say!(out, "evaluations  {}", result.evaluations_used)?;
    let failed = result.trace.iter().filter(|o| !o.is_ok()).count();
    say!(out, "failed       {failed}")?;
    match &result.best_observation {
        Some(best) => {
            say!(out, "best         {}", best.config)?;
            say!(out, "time_ms      {}", best.time_ms.unwrap_or(f64::NAN))?;
            if let Some(m) = best.metric_value {
                say!(out, "metric       {m}")?;
            }
        }
        None => say!(out, "best         none (no feasible optimum)")?,
    }
    if !result.walks.is_empty() {
        let done = result.walks.iter().filter(|w| w.reached_minimum).count();
        say!(
            out,
            "walks        {} ({done} reached a local minimum)",
            result.walks.len()
        )?;
    }
    if let Some(note) = &result.note {
        say!(out, "note         {note}")?;
    }
    Ok(())
}

fn analyze(cmd: &AnalyzeCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        AnalyzeCommand::Stats { cache } => {
            let cache = store::read_cache(cache)?;
            let s = landscape::perf_stats(&cache)?;
            say!(out, "kernel   {}", cache.kernel_name)?;
            say!(out, "device   {}", cache.device_name)?;
            say!(out, "ok       {}", s.n_ok)?;
            say!(out, "failed   {}", s.n_failed)?;
            say!(out, "median   {}", s.median_perf)?;
            say!(out, "maximum  {}", s.max_perf)?;
            say!(out, "impact   {:.1}x", s.impact)?;
            Ok(())
        }
        AnalyzeCommand::Centrality {
            cache,
            space,
            scheme,
            p_max,
            damping,
            out: path,
        } => {
            if p_max.is_nan() || *p_max < 0.0 {
                return Err(CliError::Usage(format!(
                    "--p-max must be non-negative, got {p_max}"
                )));
            }
            let space = load_space(space, *scheme)?;
            let cache = store::read_cache(cache)?;
            let g = landscape::build_ffg(&cache, &space, space.neighbor_scheme())?;
            let opts = PageRankOptions {
                damping: *damping,
                ..Default::default()
            };
            let curve = landscape::centrality_curve(&g, &opts, &landscape::default_p_grid(*p_max))?;
            say!(out, "nodes          {}", g.len())?;
            say!(out, "edges          {}", g.edge_count())?;
            say!(out, "local minima   {}", curve.minima_count)?;
            say!(out, "omitted failed {}", g.omitted_failed)?;
            say!(out, "p       C_p")?;
            for (p, c) in curve.p_grid.iter().zip(&curve.c_p_values) {
                say!(out, "{:<7.3} {c:.6}", p)?;
            }
            if let Some(path) = path {
                write_file(path, &curve.to_csv())?;
            }
            Ok(())
        }
        AnalyzeCommand::Portability {
            caches,
            subset,
            config,
            out: path,
        } => {
            let mut map = DeviceCaches::new();
            for p in caches {
                let c = store::read_cache(p)?;
                let name = c.device_name.clone();
                if map.insert(name.clone(), c).is_some() {
                    return Err(CliError::Usage(format!(
                        "two caches are for device `{name}`"
                    )));
                }
            }
            let names: Vec<&str> = if subset.is_empty() {
                map.keys().map(String::as_str).collect()
            } else {
                subset.iter().map(String::as_str).collect()
            };
            let report = match config {
                Some(key) => {
                    landscape::perf_portability(&map, &names, &Configuration::from_key(key))?
                }
                None => landscape::best_portable_config(&map, &names)?,
            };
            say!(out, "config  {}", report.config)?;
            for (d, e) in report.devices.iter().zip(&report.efficiencies) {
                say!(out, "{d}  {:.1}%", e * 100.0)?;
            }
            say!(out, "PP      {:.4}", report.pp)?;
            if let Some(path) = path {
                write_file(path, &report.to_json())?;
            }
            Ok(())
        }
        AnalyzeCommand::Topk { cache, k } => {
            if *k == 0 {
                return Err(CliError::Usage("-k must be at least 1".into()));
            }
            let cache = store::read_cache(cache)?;
            let rows = landscape::top_k(&cache, *k);
            say!(out, "{}  metric", cache.param_order.join(","))?;
            for (c, m) in rows {
                say!(out, "{}  {m}", c.key())?;
            }
            Ok(())
        }
    }
}

fn export(cmd: &ExportCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        ExportCommand::Dist {
            cache,
            out: path,
            quantiles_out,
        } => {
            let cache = store::read_cache(cache)?;
            let dist = landscape::export_distribution(&cache)?;
            write_file(path, &dist.to_csv())?;
            if let Some(q) = quantiles_out {
                write_file(q, &dist.quantiles_csv())?;
            }
            say!(out, "rows      {}", dist.rows.len())?;
            for (q, v) in &dist.quantiles {
                say!(out, "q{:<8} {v:.4}", format!("{:02}", (q * 100.0).round()))?;
            }
            Ok(())
        }
        ExportCommand::Ffg {
            cache,
            space,
            scheme,
            out: path,
        } => {
            let space = load_space(space, *scheme)?;
            let cache = store::read_cache(cache)?;
            let g = landscape::build_ffg(&cache, &space, space.neighbor_scheme())?;
            write_file(path, &landscape::export_dot(&g))?;
            say!(out, "nodes          {}", g.len())?;
            say!(out, "edges          {}", g.edge_count())?;
            say!(out, "omitted failed {}", g.omitted_failed)?;
            Ok(())
        }
    }
}

fn import(args: &ImportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let space = args
        .space
        .as_deref()
        .map(|p| load_space(p, None))
        .transpose()?;
    let mut options = ImportOptions {
        expected_space: space.as_ref(),
        metric_field: args.metric_field.clone(),
        device_name: args.device.clone(),
        ..Default::default()
    };
    for (pattern, status) in args.markers.iter().rev() {
        options.markers.prepend(pattern, *status);
    }
    let cache: TuningCache = match args.from {
        ImportFormat::External => store::import_external_cache(&args.input, &options)?,
    };
    store::write_cache(&cache, &args.out)?;
    say!(out, "records  {}", cache.len())?;
    say!(out, "ok       {}", cache.ok_records().count())?;
    Ok(())
}
