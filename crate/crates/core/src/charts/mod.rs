//! Renderer-independent chart specifications built from a fused table.
//!
//! Line charts carry one [`Segment`] per consecutive point pair; each pair
//! is solved on its own. Radial charts map the slice index to an angle
//! (clockwise from 12 o'clock) and the normalized value to a radius.

mod radial;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::TimePoint;
use crate::store::{aggregate_cell, slice_range, Aggregator, SliceGranularity, StoreError, TemporalTable};

pub use radial::{radial_point, PolarPoint, RadialBar, BAR_GAP, DEFAULT_INNER_RATIO};

/// Fixed color cycle; series take indices in column order.
pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("UnknownMetric: `{0}` is not a column of the table")]
    UnknownMetric(String),
    #[error("EmptySelection: no cells of the selected metrics fall in the range")]
    EmptySelection,
    #[error("TooFewSlices: a radial chart needs at least 3 time slices, found {found}")]
    TooFewSlices { found: usize },
    #[error("TooManySeries: {count} series requested, the palette holds {}", PALETTE.len())]
    TooManySeries { count: usize },
    #[error("DegenerateRange: reference range [{low}, {high}] is empty")]
    DegenerateRange { low: f64, high: f64 },
    #[error("DegenerateValueRange: value domain [{vmin}, {vmax}] is empty")]
    DegenerateValueRange { vmin: f64, vmax: f64 },
    #[error("MissingReferenceRange: metric `{0}` has no reference range")]
    MissingReferenceRange(String),
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("invalid radial input: {0}")]
    InvalidRadialInput(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefRange {
    pub low: f64,
    pub high: f64,
    pub unit: String,
}

impl RefRange {
    pub fn new(low: f64, high: f64, unit: impl Into<String>) -> Result<Self, ChartError> {
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(ChartError::DegenerateRange { low, high });
        }
        Ok(RefRange {
            low,
            high,
            unit: unit.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    ReferenceRange,
    MinMax,
    None,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::ReferenceRange => "reference_range",
            Normalization::MinMax => "min_max",
            Normalization::None => "none",
        }
    }
}

impl FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference_range" | "reference-range" => Ok(Normalization::ReferenceRange),
            "min_max" | "min-max" => Ok(Normalization::MinMax),
            "none" => Ok(Normalization::None),
            other => Err(format!(
                "unknown normalization `{other}` (expected reference_range, min_max or none)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub metric: String,
    pub points: Vec<SeriesPoint>,
    pub normalization: Normalization,
    /// Indices of points whose normalized value leaves [0, 1].
    pub out_of_range: BTreeSet<usize>,
}

/// `v = slope·t + intercept` between two consecutive points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub slope: f64,
    pub intercept: f64,
    pub start: SeriesPoint,
    pub end: SeriesPoint,
}

impl Segment {
    pub fn through(start: SeriesPoint, end: SeriesPoint) -> Self {
        let slope = (end.v - start.v) / (end.t - start.t);
        Segment {
            slope,
            intercept: start.v - slope * start.t,
            start,
            end,
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.slope * t + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Line,
    CompoundLine,
    RadialLine,
    RadialBar,
}

impl ChartKind {
    pub fn is_radial(self) -> bool {
        matches!(self, ChartKind::RadialLine | ChartKind::RadialBar)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChartKind::Line => "line",
            ChartKind::CompoundLine => "compound_line",
            ChartKind::RadialLine => "radial_line",
            ChartKind::RadialBar => "radial_bar",
        }
    }
}

impl fmt::Display for ChartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartGeometry {
    /// One list of segments per series.
    Segments(Vec<Vec<Segment>>),
    /// One closed vertex ring per series; the last vertex repeats the first.
    Polygons(Vec<Vec<PolarPoint>>),
    Bars(Vec<RadialBar>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeRange {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

/// Serialized with `to_text` as JSON in struct field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub kind: ChartKind,
    pub granularity: SliceGranularity,
    /// First slice start to last slice end (exclusive).
    pub time_range: TimeRange,
    /// Slice starts; series `t` values index into this list.
    pub slices: Vec<NaiveDate>,
    pub series: Vec<Series>,
    /// Index into [`PALETTE`] per series.
    pub palette: Vec<usize>,
    /// Radial kinds only: points per revolution.
    pub angular_slots: Option<usize>,
    /// Normalized-value interval mapped onto the plot's value axis or radius.
    pub value_domain: (f64, f64),
    /// Radial kinds only: (inner, outer), outer normalized to 1.
    pub radii: Option<(f64, f64)>,
    pub geometry: ChartGeometry,
}

impl ChartSpec {
    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("chart spec serializes");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn color(&self, series: usize) -> &'static str {
        PALETTE[self.palette[series] % PALETTE.len()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartRequest {
    pub metrics: Vec<String>,
    pub range: Option<(TimePoint, TimePoint)>,
    pub aggregator: Aggregator,
    pub normalization: Normalization,
}

impl ChartRequest {
    pub fn new<S: Into<String>>(metrics: impl IntoIterator<Item = S>) -> Self {
        ChartRequest {
            metrics: metrics.into_iter().map(Into::into).collect(),
            range: None,
            aggregator: Aggregator::default(),
            normalization: Normalization::default(),
        }
    }

    pub fn normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn aggregator(mut self, aggregator: Aggregator) -> Self {
        self.aggregator = aggregator;
        self
    }

    pub fn range(mut self, from: TimePoint, to: TimePoint) -> Self {
        self.range = Some((from, to));
        self
    }
}

pub fn normalize_series(
    metric: &str,
    raw: &[(f64, f64)],
    range: Option<&RefRange>,
    mode: Normalization,
) -> Result<Series, ChartError> {
    for (i, &(t, v)) in raw.iter().enumerate() {
        if !t.is_finite() || !v.is_finite() {
            return Err(ChartError::InvalidSeries(format!("{metric}: point {i} is not finite")));
        }
        if i > 0 && raw[i - 1].0 >= t {
            return Err(ChartError::InvalidSeries(format!(
                "{metric}: time not strictly increasing at point {i}"
            )));
        }
    }
    let mut out_of_range = BTreeSet::new();
    let values: Vec<f64> = match mode {
        Normalization::None => raw.iter().map(|p| p.1).collect(),
        Normalization::ReferenceRange => {
            let r = range.ok_or_else(|| ChartError::MissingReferenceRange(metric.to_string()))?;
            if !(r.low < r.high) {
                return Err(ChartError::DegenerateRange {
                    low: r.low,
                    high: r.high,
                });
            }
            let width = r.high - r.low;
            raw.iter()
                .enumerate()
                .map(|(i, &(_, v))| {
                    let n = (v - r.low) / width;
                    if !(0.0..=1.0).contains(&n) {
                        out_of_range.insert(i);
                    }
                    n
                })
                .collect()
        }
        Normalization::MinMax => {
            let lo = raw.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let hi = raw.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            raw.iter()
                .map(|&(_, v)| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 })
                .collect()
        }
    };
    Ok(Series {
        metric: metric.to_string(),
        points: raw
            .iter()
            .zip(values)
            .map(|(&(t, _), v)| SeriesPoint { t, v })
            .collect(),
        normalization: mode,
        out_of_range,
    })
}

/// One segment per consecutive pair, each solved from its own two endpoints.
pub fn line_segments(series: &Series) -> Vec<Segment> {
    series.points.windows(2).map(|w| Segment::through(w[0], w[1])).collect()
}

pub fn build_line_chart(table: &TemporalTable, request: &ChartRequest) -> Result<ChartSpec, ChartError> {
    let sel = Selection::collect(table, request)?;
    let kind = if sel.series.len() == 1 {
        ChartKind::Line
    } else {
        ChartKind::CompoundLine
    };
    let geometry = ChartGeometry::Segments(sel.series.iter().map(line_segments).collect());
    Ok(sel.into_spec(kind, None, None, geometry))
}

pub fn build_radial_chart(table: &TemporalTable, request: &ChartRequest) -> Result<ChartSpec, ChartError> {
    let sel = Selection::collect(table, request)?;
    let n = sel.slices.len();
    if n < 3 {
        return Err(ChartError::TooFewSlices { found: n });
    }
    let (vmin, vmax) = sel.value_domain;
    let (r_inner, r_outer) = radial::default_radii();
    let mut rings = Vec::with_capacity(sel.series.len());
    for s in &sel.series {
        let mut ring = s
            .points
            .iter()
            .map(|p| radial_point(p.t as usize, n, p.v, vmin, vmax, r_inner, r_outer))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(&first) = ring.first() {
            ring.push(first);
        }
        rings.push(ring);
    }
    Ok(sel.into_spec(
        ChartKind::RadialLine,
        Some(n),
        Some((r_inner, r_outer)),
        ChartGeometry::Polygons(rings),
    ))
}

pub fn build_radial_bar_chart(table: &TemporalTable, request: &ChartRequest) -> Result<ChartSpec, ChartError> {
    let sel = Selection::collect(table, request)?;
    let n = sel.slices.len();
    let (r_inner, r_outer) = radial::default_radii();
    let bars = radial::bars(&sel.series, n, sel.value_domain, (r_inner, r_outer))?;
    Ok(sel.into_spec(
        ChartKind::RadialBar,
        Some(n),
        Some((r_inner, r_outer)),
        ChartGeometry::Bars(bars),
    ))
}

struct Selection {
    granularity: SliceGranularity,
    slices: Vec<crate::store::TimeSlice>,
    series: Vec<Series>,
    value_domain: (f64, f64),
}

impl Selection {
    fn collect(table: &TemporalTable, request: &ChartRequest) -> Result<Selection, ChartError> {
        for m in &request.metrics {
            if table.column(m).is_none() {
                return Err(ChartError::UnknownMetric(m.clone()));
            }
        }
        // Column order, duplicates removed.
        let metrics: Vec<&str> = table
            .columns()
            .map(|c| c.metric.as_str())
            .filter(|m| request.metrics.iter().any(|r| r == m))
            .collect();
        if metrics.is_empty() {
            return Err(ChartError::EmptySelection);
        }
        if metrics.len() > PALETTE.len() {
            return Err(ChartError::TooManySeries { count: metrics.len() });
        }
        let ranged;
        let table = match request.range {
            Some((from, to)) => {
                ranged = slice_range(table, from, to)?;
                &ranged
            }
            None => table,
        };
        let slices: Vec<_> = table
            .rows()
            .filter(|(_, cells)| metrics.iter().any(|m| cells.contains_key(*m)))
            .map(|(s, _)| *s)
            .collect();
        if slices.is_empty() {
            return Err(ChartError::EmptySelection);
        }
        let mut series = Vec::with_capacity(metrics.len());
        for metric in &metrics {
            let mut raw = Vec::new();
            for (i, slice) in slices.iter().enumerate() {
                if let Some(cell) = table.cell(slice, metric) {
                    raw.push((i as f64, aggregate_cell(cell, request.aggregator)?));
                }
            }
            let range = table.column(metric).and_then(|c| c.reference_range.as_ref());
            series.push(normalize_series(metric, &raw, range, request.normalization)?);
        }
        let value_domain = match request.normalization {
            Normalization::None => {
                let values = series.iter().flat_map(|s| s.points.iter().map(|p| p.v));
                let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                if hi > lo {
                    (lo, hi)
                } else {
                    (lo - 0.5, hi + 0.5)
                }
            }
            _ => (0.0, 1.0),
        };
        Ok(Selection {
            granularity: table.granularity(),
            slices,
            series,
            value_domain,
        })
    }

    fn into_spec(
        self,
        kind: ChartKind,
        angular_slots: Option<usize>,
        radii: Option<(f64, f64)>,
        geometry: ChartGeometry,
    ) -> ChartSpec {
        let time_range = TimeRange {
            from: self.slices[0].start(),
            to: self.slices[self.slices.len() - 1].end_exclusive(),
        };
        ChartSpec {
            kind,
            granularity: self.granularity,
            time_range,
            slices: self.slices.iter().map(|s| s.start()).collect(),
            palette: (0..self.series.len()).collect(),
            series: self.series,
            angular_slots,
            value_domain: self.value_domain,
            radii,
            geometry,
        }
    }
}
