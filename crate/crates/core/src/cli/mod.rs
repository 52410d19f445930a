//! Command-line driver: `ingest`, `render`, `check` and `report`.
//!
//! Exit codes are 0 for success, 1 when a quality gate fails (legibility or
//! a report probe) and 2 for usage, input or pipeline errors.

pub mod archive;
pub mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::Days;
use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::charts::{
    build_line_chart, build_radial_bar_chart, build_radial_chart, ChartError, ChartRequest, ChartSpec,
};
use crate::ingest::{extract_observations_with, load_report, IngestError, MetricLexicon, Observation, TimePoint};
use crate::render::{render_svg, select_layout, DeviceClass, DeviceProfile, RenderError, RenderedChart};
use crate::store::persist::write_atomic;
use crate::store::{add_report, fuse, FuseWarning, SliceGranularity, StoreError, TemporalTable, STORE_VERSION};

use archive::{is_archive, Archive, ARCHIVE_VERSION};
pub use config::{Config, ConfigError, CONFIG_ENV};

pub const ARCHIVE_FILE: &str = "observations.archive";
pub const STORE_FILE: &str = "table.store";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    GateFailed = 1,
    Error = 2,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Parser)]
#[command(
    name = "chronofuse",
    version,
    about = "Fuse clinical reports into a temporal table and render device-adapted charts"
)]
pub struct Cli {
    /// Config file (flat `key = value`); falls back to $CHRONOFUSE_CONFIG.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Metric lexicon file.
    #[arg(long, global = true, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_granularity)]
    granularity: Option<SliceGranularity>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract observations from reports and write the archive and store.
    Ingest {
        #[arg(required = true, value_name = "REPORT")]
        reports: Vec<PathBuf>,
    },
    /// Render one chart for one device and write SVG plus diagnostics.
    Render {
        #[arg(value_name = "ARCHIVE_OR_STORE")]
        input: PathBuf,
        #[command(flatten)]
        chart: ChartArgs,
        #[arg(long, value_enum, default_value_t = Device::Monitor)]
        device: Device,
    },
    /// Run the legibility checks for every device class (or one).
    Check {
        #[arg(value_name = "ARCHIVE_OR_STORE")]
        input: PathBuf,
        #[command(flatten)]
        chart: ChartArgs,
        #[arg(long, value_enum)]
        device: Option<Device>,
    },
    /// Print the feature checklist, each row backed by a probe.
    Report {
        #[arg(value_name = "ARCHIVE_OR_STORE")]
        input: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
struct ChartArgs {
    #[arg(long, value_enum, default_value_t = Kind::Line)]
    kind: Kind,
    /// Comma-separated metric names; all columns when omitted.
    #[arg(long, value_delimiter = ',', value_name = "A,B")]
    metrics: Vec<String>,
    #[arg(long, value_name = "DATE")]
    from: Option<String>,
    #[arg(long, value_name = "DATE")]
    to: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Line,
    Radial,
    RadialBar,
}

impl Kind {
    fn as_str(self) -> &'static str {
        match self {
            Kind::Line => "line",
            Kind::Radial => "radial",
            Kind::RadialBar => "radial-bar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Device {
    Monitor,
    Tablet,
    Phone,
}

impl From<Device> for DeviceClass {
    fn from(d: Device) -> Self {
        match d {
            Device::Monitor => DeviceClass::Monitor,
            Device::Tablet => DeviceClass::Tablet,
            Device::Phone => DeviceClass::Phone,
        }
    }
}

fn parse_granularity(s: &str) -> Result<SliceGranularity, String> {
    s.parse()
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, env_config: Option<PathBuf>, out: &mut dyn Write, err: &mut dyn Write) -> Exit
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { Exit::Error } else { Exit::Success };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli, env_config, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            Exit::Error
        }
    }
}

fn execute(cli: Cli, env_config: Option<PathBuf>, out: &mut dyn Write, err: &mut dyn Write) -> Result<Exit, CliError> {
    let mut config = Config::resolve(cli.config.as_deref(), env_config.as_deref())?;
    if let Some(lex) = cli.lexicon {
        config.lexicon_path = Some(lex);
    }
    if let Some(g) = cli.granularity {
        config.granularity = g;
    }
    if let Some(o) = cli.out {
        config.out_dir = o;
    }
    config.validate()?;
    match cli.command {
        Command::Ingest { reports } => cmd_ingest(&reports, &config, out, err),
        Command::Render { input, chart, device } => cmd_render(&input, &chart, device.into(), &config, out),
        Command::Check { input, chart, device } => cmd_check(&input, &chart, device.map(Into::into), &config, out),
        Command::Report { input } => cmd_report(&input, &config, out),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.display().to_string(),
        source,
    })
}

fn cmd_ingest(paths: &[PathBuf], config: &Config, out: &mut dyn Write, err: &mut dyn Write) -> Result<Exit, CliError> {
    let lexicon_path = config
        .lexicon_path
        .as_ref()
        .ok_or_else(|| CliError::Usage("ingest needs a lexicon (--lexicon or `lexicon` in the config)".into()))?;
    let lexicon = MetricLexicon::load(lexicon_path)?;
    // Everything is extracted before anything is written.
    let mut observations = Vec::new();
    let mut summaries = Vec::new();
    for path in paths {
        let doc = load_report(path, None)?;
        let extraction = extract_observations_with(&doc, &lexicon, config.date_order)?;
        summaries.push(format!(
            "{}: {} observations, {} warnings",
            doc.report_id,
            extraction.observations.len(),
            extraction.warnings.len()
        ));
        for w in &extraction.warnings {
            let _ = writeln!(err, "warning: {w}");
        }
        observations.extend(extraction.observations);
    }
    let fused = fuse(&observations, config.granularity)?;
    let mut collisions: BTreeMap<&str, usize> = BTreeMap::new();
    for w in &fused.warnings {
        match w {
            FuseWarning::CellCollision { metric, .. } => *collisions.entry(metric).or_default() += 1,
            other => {
                let _ = writeln!(err, "warning: {other}");
            }
        }
    }
    for (metric, cells) in collisions {
        let _ = writeln!(
            err,
            "warning: {cells} {} slices hold several {metric} readings",
            config.granularity
        );
    }
    let table = fused.table.with_reference_ranges(&lexicon);
    let archive = Archive::new(&lexicon, observations);

    ensure_dir(&config.out_dir)?;
    let archive_path = config.out_dir.join(ARCHIVE_FILE);
    let store_path = config.out_dir.join(STORE_FILE);
    write_file(&archive_path, archive.to_text().as_bytes())?;
    write_file(&store_path, table.to_store_text().as_bytes())?;
    for s in summaries {
        let _ = writeln!(out, "{s}");
    }
    let _ = writeln!(
        out,
        "wrote {} ({} reports, {} observations)",
        archive_path.display(),
        archive.reports().len(),
        archive.observations.len()
    );
    let _ = writeln!(
        out,
        "wrote {} ({} columns, {} {} slices)",
        store_path.display(),
        table.column_count(),
        table.row_count(),
        table.granularity()
    );
    Ok(Exit::Success)
}

/// Loads an archive (re-fused at the configured granularity) or a store.
pub fn load_input(path: &Path, config: &Config) -> Result<TemporalTable, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if is_archive(&text) {
        let archive = Archive::from_text(&text)?;
        let mut table = fuse(&archive.observations, config.granularity)?.table;
        table.set_reference_ranges(|m| archive.ranges.get(m).cloned());
        Ok(table)
    } else {
        Ok(TemporalTable::from_store_text(&text)?)
    }
}

fn chart_request(table: &TemporalTable, args: &ChartArgs, config: &Config) -> Result<ChartRequest, CliError> {
    let metrics: Vec<String> = if args.metrics.is_empty() {
        table.columns().map(|c| c.metric.clone()).collect()
    } else {
        args.metrics
            .iter()
            .map(|m| m.trim().to_string())
            .filter(|m| !m.is_empty())
            .collect()
    };
    let mut request = ChartRequest::new(metrics)
        .aggregator(config.aggregator)
        .normalization(config.normalization);
    if args.from.is_some() || args.to.is_some() {
        let parse = |s: &str| crate::ingest::parse_timestamp_with(s, config.date_order);
        let first = table.slices().next().map(|s| TimePoint::day(s.start()));
        let last = table
            .slices()
            .last()
            .and_then(|s| s.end_exclusive().checked_sub_days(Days::new(1)))
            .map(TimePoint::day);
        let from = match &args.from {
            Some(s) => parse(s)?,
            None => first.ok_or(ChartError::EmptySelection)?,
        };
        let to = match &args.to {
            Some(s) => parse(s)?,
            None => last.ok_or(ChartError::EmptySelection)?,
        };
        request = request.range(from, to);
    }
    Ok(request)
}

fn build_chart(table: &TemporalTable, kind: Kind, request: &ChartRequest) -> Result<ChartSpec, ChartError> {
    match kind {
        Kind::Line => build_line_chart(table, request),
        Kind::Radial => build_radial_chart(table, request),
        Kind::RadialBar => build_radial_bar_chart(table, request),
    }
}

fn render_for(spec: &ChartSpec, profile: &DeviceProfile) -> Result<RenderedChart, RenderError> {
    render_svg(spec, &select_layout(spec, profile), profile)
}

fn cmd_render(
    input: &Path,
    args: &ChartArgs,
    device: DeviceClass,
    config: &Config,
    out: &mut dyn Write,
) -> Result<Exit, CliError> {
    let table = load_input(input, config)?;
    let request = chart_request(&table, args, config)?;
    let spec = build_chart(&table, args.kind, &request)?;
    let rendered = render_for(&spec, config.profile(device))?;

    ensure_dir(&config.out_dir)?;
    let stem = format!("{}-{device}", args.kind.as_str());
    let svg_path = config.out_dir.join(format!("{stem}.svg"));
    let diag_path = config.out_dir.join(format!("{stem}.diagnostics.txt"));
    let report = rendered.diagnostics.report();
    write_file(&svg_path, rendered.svg.as_bytes())?;
    write_file(&diag_path, report.as_bytes())?;
    let _ = writeln!(out, "wrote {}", svg_path.display());
    let _ = writeln!(out, "wrote {}", diag_path.display());
    let _ = write!(out, "{report}");
    Ok(if rendered.diagnostics.passed() {
        Exit::Success
    } else {
        Exit::GateFailed
    })
}

fn cmd_check(
    input: &Path,
    args: &ChartArgs,
    device: Option<DeviceClass>,
    config: &Config,
    out: &mut dyn Write,
) -> Result<Exit, CliError> {
    let table = load_input(input, config)?;
    let request = chart_request(&table, args, config)?;
    let spec = build_chart(&table, args.kind, &request)?;
    let classes: Vec<DeviceClass> = match device {
        Some(d) => vec![d],
        None => DeviceClass::ALL.to_vec(),
    };
    let mut all_pass = true;
    for class in classes {
        let rendered = render_for(&spec, config.profile(class))?;
        all_pass &= rendered.diagnostics.passed();
        let _ = writeln!(out, "device: {class}");
        let _ = write!(out, "{}", rendered.diagnostics.report());
    }
    Ok(if all_pass { Exit::Success } else { Exit::GateFailed })
}

/// One checklist row: a feature name, its probe outcome and what was observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub feature: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Probe {
    fn new(feature: &'static str, outcome: Result<String, String>) -> Self {
        let (passed, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        Probe {
            feature,
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "Yes" } else { "No" };
        format!("{}: {verdict} ({})", self.feature, self.detail)
    }
}

pub const WEEKLY_SLICES_REQUIRED: usize = 52;

/// Runs the five checklist probes against a loaded table.
pub fn efficacy_probes(table: &TemporalTable, config: &Config) -> Vec<Probe> {
    let columns = table.column_count();
    let multivariate = if columns >= 2 {
        Ok(format!("{columns} metric columns fused"))
    } else {
        Err(format!("{columns} metric column fused, need at least 2"))
    };

    let observations = table.observations();
    let weekly_spec = weekly_chart(table, &observations, config);
    let long_series = match &weekly_spec {
        Ok((spec, slices)) if *slices >= WEEKLY_SLICES_REQUIRED => {
            match render_for(spec, config.profile(DeviceClass::Monitor)) {
                Ok(r) if r.diagnostics.passed() => Ok(format!("{slices} weekly slices rendered")),
                Ok(_) => Err(format!("{slices} weekly slices render but fail legibility on monitor")),
                Err(e) => Err(e.to_string()),
            }
        }
        Ok((_, slices)) => Err(format!(
            "{slices} weekly slices, need at least {WEEKLY_SLICES_REQUIRED}"
        )),
        Err(e) => Err(e.clone()),
    };

    let devices = match &weekly_spec {
        Ok((spec, _)) => {
            let verdicts: Vec<(DeviceClass, Result<bool, String>)> = DeviceClass::ALL
                .into_iter()
                .map(|c| {
                    (
                        c,
                        render_for(spec, config.profile(c))
                            .map(|r| r.diagnostics.passed())
                            .map_err(|e| e.to_string()),
                    )
                })
                .collect();
            let detail = verdicts
                .iter()
                .map(|(c, v)| match v {
                    Ok(true) => format!("{c} pass"),
                    Ok(false) => format!("{c} fail"),
                    Err(_) => format!("{c} error"),
                })
                .collect::<Vec<_>>()
                .join(", ");
            if verdicts.iter().all(|(_, v)| matches!(v, Ok(true))) {
                Ok(detail)
            } else {
                Err(detail)
            }
        }
        Err(e) => Err(e.clone()),
    };

    let details = Ok(format!(
        "chronofuse {}, store format {STORE_VERSION}, archive format {ARCHIVE_VERSION}, granularity {}, aggregator {}, normalization {}",
        env!("CARGO_PKG_VERSION"),
        config.granularity,
        config.aggregator.as_str(),
        config.normalization.as_str()
    ));

    let accumulation = incremental_matches(table.granularity(), &observations);

    vec![
        Probe::new("Multivariate data accommodation", multivariate),
        Probe::new("Higher time series graph", long_series),
        Probe::new("Device transparency", devices),
        Probe::new("Implementation details", details),
        Probe::new("Dynamic data accumulation", accumulation),
    ]
}

/// Line chart of up to eight metrics at weekly granularity, with its slice count.
fn weekly_chart(
    table: &TemporalTable,
    observations: &[Observation],
    config: &Config,
) -> Result<(ChartSpec, usize), String> {
    let mut weekly = fuse(observations, SliceGranularity::Week)
        .map_err(|e| e.to_string())?
        .table;
    weekly.set_reference_ranges(|m| table.column(m).and_then(|c| c.reference_range.clone()));
    let metrics: Vec<String> = weekly
        .columns()
        .take(crate::charts::PALETTE.len())
        .map(|c| c.metric.clone())
        .collect();
    if metrics.is_empty() {
        return Err("the table has no columns".into());
    }
    let request = ChartRequest::new(metrics)
        .aggregator(config.aggregator)
        .normalization(config.normalization);
    let spec = build_line_chart(&weekly, &request).map_err(|e| e.to_string())?;
    Ok((spec, weekly.row_count()))
}

/// Fuses the reports one at a time and compares with fusing them all at once.
fn incremental_matches(granularity: SliceGranularity, observations: &[Observation]) -> Result<String, String> {
    let mut by_report: BTreeMap<&str, Vec<Observation>> = BTreeMap::new();
    for o in observations {
        by_report.entry(o.source.as_str()).or_default().push(o.clone());
    }
    if by_report.is_empty() {
        return Err("the table holds no observations".into());
    }
    let all = fuse(observations, granularity).map_err(|e| e.to_string())?.table;
    let mut incremental = TemporalTable::empty(granularity);
    for batch in by_report.values() {
        incremental = add_report(&incremental, batch).map_err(|e| e.to_string())?;
    }
    if incremental == all {
        Ok(format!(
            "adding {} reports one by one matches fusing them together",
            by_report.len()
        ))
    } else {
        Err("incremental fusion differs from fusing all reports together".into())
    }
}

fn cmd_report(input: &Path, config: &Config, out: &mut dyn Write) -> Result<Exit, CliError> {
    let table = load_input(input, config)?;
    let probes = efficacy_probes(&table, config);
    let _ = writeln!(out, "input: {}", input.display());
    for p in &probes {
        let _ = writeln!(out, "{}", p.line());
    }
    let _ = writeln!(out, "config:");
    for line in config.echo().lines() {
        let _ = writeln!(out, "  {line}");
    }
    Ok(if probes.iter().all(|p| p.passed) {
        Exit::Success
    } else {
        Exit::GateFailed
    })
}
