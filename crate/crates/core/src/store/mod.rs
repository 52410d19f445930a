//! Time-keyed fusion of observations into a dynamic-column table.
//!
//! Rows are time slices, columns are metrics. Columns appear on demand as
//! new metrics arrive. Colliding readings (same metric, same slice) are all
//! kept with their source report; aggregation happens when charts are built.

pub(crate) mod persist;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Days, Months, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charts::RefRange;
use crate::ingest::{MetricLexicon, Observation, ReportId, TimePoint};

pub use persist::{load_table, save_table, STORE_MAGIC, STORE_VERSION};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("UnitConflict: metric {metric} arrives as both `{first}` and `{second}`")]
    UnitConflict {
        metric: String,
        first: String,
        second: String,
    },
    #[error("InvertedRange: {from} is after {to}")]
    InvertedRange { from: TimePoint, to: TimePoint },
    #[error("EmptyCell: cannot aggregate a cell without entries")]
    EmptyCell,
    #[error("VersionMismatch: store version `{found}` is not supported (expected {STORE_VERSION})")]
    VersionMismatch { found: String },
    #[error("MalformedStore: line {line}: {reason}")]
    MalformedStore { line: usize, reason: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceGranularity {
    #[default]
    Day,
    Week,
    Month,
}

impl SliceGranularity {
    pub fn as_str(self) -> &'static str {
        match self {
            SliceGranularity::Day => "day",
            SliceGranularity::Week => "week",
            SliceGranularity::Month => "month",
        }
    }
}

impl fmt::Display for SliceGranularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SliceGranularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" => Ok(SliceGranularity::Day),
            "week" => Ok(SliceGranularity::Week),
            "month" => Ok(SliceGranularity::Month),
            other => Err(format!("unknown granularity `{other}` (expected day, week or month)")),
        }
    }
}

/// A granularity-aligned bucket: weeks start on Monday, months on day 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeSlice {
    start: NaiveDate,
    granularity: SliceGranularity,
}

impl TimeSlice {
    pub fn containing(date: NaiveDate, granularity: SliceGranularity) -> Self {
        let start = match granularity {
            SliceGranularity::Day => date,
            SliceGranularity::Week => date - Days::new(date.weekday().num_days_from_monday() as u64),
            SliceGranularity::Month => date.with_day(1).expect("day 1 exists"),
        };
        TimeSlice { start, granularity }
    }

    /// `None` when `start` is not on a granularity boundary.
    pub fn aligned(start: NaiveDate, granularity: SliceGranularity) -> Option<Self> {
        let slice = TimeSlice::containing(start, granularity);
        (slice.start == start).then_some(slice)
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn granularity(&self) -> SliceGranularity {
        self.granularity
    }

    pub fn end_exclusive(&self) -> NaiveDate {
        match self.granularity {
            SliceGranularity::Day => self.start + Days::new(1),
            SliceGranularity::Week => self.start + Days::new(7),
            SliceGranularity::Month => self.start + Months::new(1),
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date < self.end_exclusive()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDescriptor {
    pub metric: String,
    pub unit: String,
    pub reference_range: Option<RefRange>,
    pub source_reports: BTreeSet<ReportId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub value: f64,
    pub source: ReportId,
    pub time: TimePoint,
}

impl CellEntry {
    fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.source
            .cmp(&other.source)
            .then(self.time.cmp(&other.time))
            .then(self.value.total_cmp(&other.value))
    }
}

/// All readings of one metric inside one slice, ordered by
/// (source report, time, value).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    entries: Vec<CellEntry>,
}

impl Cell {
    pub fn new(mut entries: Vec<CellEntry>) -> Self {
        entries.sort_by(CellEntry::canonical_cmp);
        Cell { entries }
    }

    pub fn entries(&self) -> &[CellEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn push(&mut self, entry: CellEntry) {
        let at = self
            .entries
            .partition_point(|e| e.canonical_cmp(&entry) != std::cmp::Ordering::Greater);
        self.entries.insert(at, entry);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[default]
    Mean,
    Median,
    First,
    Last,
}

impl Aggregator {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::Median => "median",
            Aggregator::First => "first",
            Aggregator::Last => "last",
        }
    }
}

impl FromStr for Aggregator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "median" => Ok(Aggregator::Median),
            "first" => Ok(Aggregator::First),
            "last" => Ok(Aggregator::Last),
            other => Err(format!(
                "unknown aggregator `{other}` (expected mean, median, first or last)"
            )),
        }
    }
}

/// First/last follow the cell's canonical (source report) order.
pub fn aggregate_cell(cell: &Cell, aggregator: Aggregator) -> Result<f64, StoreError> {
    let entries = cell.entries();
    if entries.is_empty() {
        return Err(StoreError::EmptyCell);
    }
    Ok(match aggregator {
        Aggregator::Mean => entries.iter().map(|e| e.value).sum::<f64>() / entries.len() as f64,
        Aggregator::Median => {
            let mut values: Vec<f64> = entries.iter().map(|e| e.value).collect();
            values.sort_by(f64::total_cmp);
            let mid = values.len() / 2;
            if values.len() % 2 == 1 {
                values[mid]
            } else {
                (values[mid - 1] + values[mid]) / 2.0
            }
        }
        Aggregator::First => entries[0].value,
        Aggregator::Last => entries[entries.len() - 1].value,
    })
}

/// Upper bound on the column count of a table fused from `reports` reports
/// with at most `metrics` metrics each: `Σ_{k=1}^{m} k·r = r·m(m+1)/2`.
pub fn column_count_formula(metrics: u64, reports: u64) -> u128 {
    let m = metrics as u128;
    reports as u128 * (m * (m + 1) / 2)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FuseWarning {
    /// Several readings share one cell; all are kept.
    CellCollision {
        metric: String,
        slice: TimeSlice,
        entries: usize,
    },
    /// Readings without a unit were merged into a column that has one.
    MissingUnit { metric: String, count: usize },
}

impl fmt::Display for FuseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FuseWarning::CellCollision { metric, slice, entries } => write!(
                f,
                "{entries} readings of {metric} share the {} slice starting {}",
                slice.granularity, slice.start
            ),
            FuseWarning::MissingUnit { metric, count } => {
                write!(f, "{count} reading(s) of {metric} had no unit")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    pub table: TemporalTable,
    pub warnings: Vec<FuseWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalTable {
    granularity: SliceGranularity,
    columns: BTreeMap<String, ColumnDescriptor>,
    rows: BTreeMap<TimeSlice, BTreeMap<String, Cell>>,
}

pub fn fuse(observations: &[Observation], granularity: SliceGranularity) -> Result<Fused, StoreError> {
    let table = TemporalTable::empty(granularity).with_observations(observations)?;
    let warnings = table.warnings_for(observations);
    Ok(Fused { table, warnings })
}

/// Same result as re-fusing every earlier observation together with the new ones.
pub fn add_report(table: &TemporalTable, observations: &[Observation]) -> Result<TemporalTable, StoreError> {
    table.clone().with_observations(observations)
}

pub fn slice_range(table: &TemporalTable, from: TimePoint, to: TimePoint) -> Result<TemporalTable, StoreError> {
    if from > to {
        return Err(StoreError::InvertedRange { from, to });
    }
    let (lo, hi) = (from.date(), to.date());
    let rows: BTreeMap<_, _> = table
        .rows
        .iter()
        .filter(|(slice, _)| slice.start <= hi && slice.end_exclusive() > lo)
        .map(|(s, r)| (*s, r.clone()))
        .collect();
    let mut columns = BTreeMap::new();
    for cells in rows.values() {
        for (metric, cell) in cells {
            let col = columns.entry(metric.clone()).or_insert_with(|| ColumnDescriptor {
                source_reports: BTreeSet::new(),
                ..table.columns[metric].clone()
            });
            col.source_reports.extend(cell.entries.iter().map(|e| e.source.clone()));
        }
    }
    Ok(TemporalTable {
        granularity: table.granularity,
        columns,
        rows,
    })
}

impl TemporalTable {
    pub fn empty(granularity: SliceGranularity) -> Self {
        TemporalTable {
            granularity,
            columns: BTreeMap::new(),
            rows: BTreeMap::new(),
        }
    }

    pub fn granularity(&self) -> SliceGranularity {
        self.granularity
    }

    /// Columns in lexicographic metric order.
    pub fn columns(&self) -> impl ExactSizeIterator<Item = &ColumnDescriptor> {
        self.columns.values()
    }

    pub fn column(&self, metric: &str) -> Option<&ColumnDescriptor> {
        self.columns.get(metric)
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Rows in chronological order.
    pub fn rows(&self) -> impl Iterator<Item = (&TimeSlice, &BTreeMap<String, Cell>)> {
        self.rows.iter()
    }

    pub fn slices(&self) -> impl Iterator<Item = &TimeSlice> {
        self.rows.keys()
    }

    pub fn cell(&self, slice: &TimeSlice, metric: &str) -> Option<&Cell> {
        self.rows.get(slice).and_then(|r| r.get(metric))
    }

    pub fn cell_count(&self) -> usize {
        self.rows.values().map(BTreeMap::len).sum()
    }

    pub fn reports(&self) -> BTreeSet<&ReportId> {
        self.columns.values().flat_map(|c| c.source_reports.iter()).collect()
    }

    /// Attaches reference ranges from `lexicon` to matching columns.
    pub fn with_reference_ranges(mut self, lexicon: &MetricLexicon) -> Self {
        self.set_reference_ranges(|metric| lexicon.reference_range(metric).cloned());
        self
    }

    pub fn set_reference_ranges(&mut self, mut lookup: impl FnMut(&str) -> Option<RefRange>) {
        for col in self.columns.values_mut() {
            if let Some(r) = lookup(&col.metric) {
                col.reference_range = Some(r);
            }
        }
    }

    /// Rebuilds one observation per cell entry. Units come from the column;
    /// flags are not stored and come back empty.
    pub fn observations(&self) -> Vec<Observation> {
        let mut out = Vec::with_capacity(self.cell_count());
        for cells in self.rows.values() {
            for (metric, cell) in cells {
                let unit = &self.columns[metric].unit;
                out.extend(cell.entries.iter().map(|e| Observation {
                    metric: metric.clone(),
                    value: e.value,
                    unit: unit.clone(),
                    time: e.time,
                    source: e.source.clone(),
                    flags: BTreeSet::new(),
                }));
            }
        }
        out
    }

    fn with_observations(mut self, observations: &[Observation]) -> Result<Self, StoreError> {
        check_units(&self, observations)?;
        for obs in observations {
            let col = self
                .columns
                .entry(obs.metric.clone())
                .or_insert_with(|| ColumnDescriptor {
                    metric: obs.metric.clone(),
                    unit: String::new(),
                    reference_range: None,
                    source_reports: BTreeSet::new(),
                });
            if col.unit.is_empty() && !obs.unit.is_empty() {
                col.unit = obs.unit.clone();
            }
            col.source_reports.insert(obs.source.clone());
            let slice = TimeSlice::containing(obs.time.date(), self.granularity);
            self.rows
                .entry(slice)
                .or_default()
                .entry(obs.metric.clone())
                .or_default()
                .push(CellEntry {
                    value: obs.value,
                    source: obs.source.clone(),
                    time: obs.time,
                });
        }
        Ok(self)
    }

    fn warnings_for(&self, observations: &[Observation]) -> Vec<FuseWarning> {
        let mut warnings = Vec::new();
        for (slice, cells) in &self.rows {
            for (metric, cell) in cells {
                if cell.entries.len() > 1 {
                    warnings.push(FuseWarning::CellCollision {
                        metric: metric.clone(),
                        slice: *slice,
                        entries: cell.entries.len(),
                    });
                }
            }
        }
        let mut missing: BTreeMap<&str, usize> = BTreeMap::new();
        for obs in observations {
            if obs.unit.is_empty() && !self.columns[&obs.metric].unit.is_empty() {
                *missing.entry(&obs.metric).or_default() += 1;
            }
        }
        warnings.extend(missing.into_iter().map(|(metric, count)| FuseWarning::MissingUnit {
            metric: metric.to_string(),
            count,
        }));
        warnings
    }

    fn from_parts(
        granularity: SliceGranularity,
        columns: BTreeMap<String, ColumnDescriptor>,
        rows: BTreeMap<TimeSlice, BTreeMap<String, Cell>>,
    ) -> Self {
        TemporalTable {
            granularity,
            columns,
            rows,
        }
    }
}

/// Fails when any metric would carry two different non-empty units.
fn check_units(table: &TemporalTable, observations: &[Observation]) -> Result<(), StoreError> {
    let mut units: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for col in table.columns.values().filter(|c| !c.unit.is_empty()) {
        units.entry(&col.metric).or_default().insert(&col.unit);
    }
    for obs in observations.iter().filter(|o| !o.unit.is_empty()) {
        units.entry(&obs.metric).or_default().insert(&obs.unit);
    }
    for (metric, set) in units {
        let mut it = set.into_iter();
        if let (Some(first), Some(second)) = (it.next(), it.next()) {
            return Err(StoreError::UnitConflict {
                metric: metric.to_string(),
                first: first.to_string(),
                second: second.to_string(),
            });
        }
    }
    Ok(())
}
