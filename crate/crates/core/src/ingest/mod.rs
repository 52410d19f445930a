//! Report loading and rule-based extraction of timestamped observations.

mod lexicon;
mod measurement;
mod timestamp;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexicon::{LexiconEntry, MetricLexicon};
pub use measurement::{parse_measurement, Measurement, MeasurementParse};
pub use timestamp::{parse_timestamp, parse_timestamp_with, DateOrder, TimeGranularity, TimePoint};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid UTF-8")]
    Undecodable { path: String },
    #[error("UnknownFormat: cannot infer report format of {path}")]
    UnknownFormat { path: String },
    #[error("NoTimestamp: no accepted timestamp in `{text}`")]
    NoTimestamp { text: String },
    #[error("NoTimestampInDocument: report {report_id} has measurements but no timestamp")]
    NoTimestampInDocument { report_id: ReportId },
    #[error("invalid lexicon (line {line}): {reason}")]
    InvalidLexicon { line: usize, reason: String },
    #[error("invalid CSV report {report_id}: {reason}")]
    InvalidCsv { report_id: ReportId, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReportId(String);

impl ReportId {
    pub fn new(id: impl Into<String>) -> Self {
        ReportId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ReportId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    PlainText,
    Csv,
    StructuredRecords,
}

impl ReportFormat {
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "txt" | "text" => Some(ReportFormat::PlainText),
            "csv" => Some(ReportFormat::Csv),
            "rec" => Some(ReportFormat::StructuredRecords),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportDocument {
    pub report_id: ReportId,
    pub source_path: String,
    pub patient_id: Option<String>,
    pub lines: Vec<String>,
    pub format: ReportFormat,
}

impl ReportDocument {
    /// Builds an in-memory plain-text document.
    pub fn from_lines<S: Into<String>>(report_id: &str, lines: impl IntoIterator<Item = S>) -> Self {
        ReportDocument {
            report_id: ReportId::new(report_id),
            source_path: String::new(),
            patient_id: None,
            lines: lines.into_iter().map(Into::into).collect(),
            format: ReportFormat::PlainText,
        }
    }
}

static PATIENT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*patient(?:[ _]?id)?\s*[:=]\s*(\S.*?)\s*$").expect("patient pattern"));

/// Reads one report. The report id is the file stem.
pub fn load_report(path: &Path, format_hint: Option<ReportFormat>) -> Result<ReportDocument, IngestError> {
    let display = path.display().to_string();
    let format = match format_hint {
        Some(f) => f,
        None => path
            .extension()
            .and_then(|e| e.to_str())
            .and_then(ReportFormat::from_extension)
            .ok_or_else(|| IngestError::UnknownFormat { path: display.clone() })?,
    };
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: display.clone(),
        source,
    })?;
    let text = String::from_utf8(bytes).map_err(|_| IngestError::Undecodable { path: display.clone() })?;
    let lines: Vec<String> = text.lines().map(String::from).collect();
    let patient_id = match format {
        ReportFormat::Csv => None,
        _ => lines
            .iter()
            .find_map(|l| PATIENT_RE.captures(l).map(|c| c[1].to_string())),
    };
    let report_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| display.clone());
    Ok(ReportDocument {
        report_id: ReportId::new(report_id),
        source_path: display,
        patient_id,
        lines,
        format,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationFlag {
    UnitMismatch,
    OutOfRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub metric: String,
    pub value: f64,
    pub unit: String,
    pub time: TimePoint,
    pub source: ReportId,
    pub flags: BTreeSet<ObservationFlag>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WarningKind {
    MalformedNumber { metric: String, token: String },
    UnitMismatch { metric: String, found: Option<String> },
    UnknownMetric { name: String },
    SkippedRow { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestWarning {
    pub report_id: ReportId,
    /// 1-based source line.
    pub line: usize,
    pub kind: WarningKind,
}

impl fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.report_id, self.line)?;
        match &self.kind {
            WarningKind::MalformedNumber { metric, token } => {
                write!(f, "malformed number `{token}` after {metric}")
            }
            WarningKind::UnitMismatch { metric, found: Some(u) } => {
                write!(f, "unit `{u}` not expected for {metric}")
            }
            WarningKind::UnitMismatch { metric, found: None } => write!(f, "missing unit for {metric}"),
            WarningKind::UnknownMetric { name } => write!(f, "unknown metric `{name}`"),
            WarningKind::SkippedRow { reason } => write!(f, "skipped row: {reason}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub observations: Vec<Observation>,
    pub warnings: Vec<IngestWarning>,
}

pub fn extract_observations(doc: &ReportDocument, lexicon: &MetricLexicon) -> Result<Extraction, IngestError> {
    extract_observations_with(doc, lexicon, DateOrder::Auto)
}

/// One pass over the document. Each measurement takes the nearest preceding
/// timestamp (a timestamp on the same line counts); measurements before the
/// first timestamp take the document's first timestamp as header date.
pub fn extract_observations_with(
    doc: &ReportDocument,
    lexicon: &MetricLexicon,
    order: DateOrder,
) -> Result<Extraction, IngestError> {
    let pending = match doc.format {
        ReportFormat::PlainText => scan_plain_text(doc, lexicon, order),
        ReportFormat::StructuredRecords => scan_records(doc, lexicon, order),
        ReportFormat::Csv => scan_csv(doc, lexicon, order)?,
    };
    let header = pending.header;
    let mut out = Extraction {
        observations: Vec::with_capacity(pending.found.len()),
        warnings: pending.warnings,
    };
    for p in pending.found {
        let time = p.time.or(header).ok_or_else(|| IngestError::NoTimestampInDocument {
            report_id: doc.report_id.clone(),
        })?;
        let entry = lexicon
            .entry(&p.metric)
            .expect("measurement metric comes from the lexicon");
        let mut flags = BTreeSet::new();
        if p.unit_mismatch {
            flags.insert(ObservationFlag::UnitMismatch);
            out.warnings.push(IngestWarning {
                report_id: doc.report_id.clone(),
                line: p.line,
                kind: WarningKind::UnitMismatch {
                    metric: p.metric.clone(),
                    found: p.found_unit.clone(),
                },
            });
        }
        if let Some(r) = &entry.reference_range {
            if p.value < r.low || p.value > r.high {
                flags.insert(ObservationFlag::OutOfRange);
            }
        }
        out.observations.push(Observation {
            metric: p.metric,
            value: p.value,
            unit: p.unit,
            time,
            source: doc.report_id.clone(),
            flags,
        });
    }
    out.warnings.sort_by_key(|w| w.line);
    Ok(out)
}

struct Found {
    line: usize,
    metric: String,
    value: f64,
    unit: String,
    unit_mismatch: bool,
    found_unit: Option<String>,
    time: Option<TimePoint>,
}

#[derive(Default)]
struct Pending {
    header: Option<TimePoint>,
    found: Vec<Found>,
    warnings: Vec<IngestWarning>,
}

impl Pending {
    fn stamp(&mut self, tp: TimePoint) {
        if self.header.is_none() {
            self.header = Some(tp);
        }
    }

    fn warn(&mut self, report_id: &ReportId, line: usize, kind: WarningKind) {
        self.warnings.push(IngestWarning {
            report_id: report_id.clone(),
            line,
            kind,
        });
    }
}

fn scan_plain_text(doc: &ReportDocument, lexicon: &MetricLexicon, order: DateOrder) -> Pending {
    let mut pending = Pending::default();
    let mut current = None;
    for (i, line) in doc.lines.iter().enumerate() {
        if let Some((tp, _)) = timestamp::find_timestamp(line, order) {
            pending.stamp(tp);
            current = Some(tp);
        }
        match parse_measurement(line, lexicon) {
            MeasurementParse::NoMatch => {}
            MeasurementParse::Malformed { metric, token } => {
                pending.warn(&doc.report_id, i + 1, WarningKind::MalformedNumber { metric, token })
            }
            MeasurementParse::Found(m) => pending.found.push(Found {
                line: i + 1,
                metric: m.metric,
                value: m.value,
                unit: m.unit,
                unit_mismatch: m.unit_mismatch,
                found_unit: m.found_unit,
                time: current,
            }),
        }
    }
    pending
}

/// Structured records: `key: value` (or `key=value`) lines, records separated
/// by blank lines. Keys: `date`, `metric`, `value`, `unit`.
fn scan_records(doc: &ReportDocument, lexicon: &MetricLexicon, order: DateOrder) -> Pending {
    let mut pending = Pending::default();
    let mut current = None;
    let mut record: Vec<(usize, String, String)> = Vec::new();
    let flush = |record: &mut Vec<(usize, String, String)>, pending: &mut Pending, current: &mut Option<TimePoint>| {
        if record.is_empty() {
            return;
        }
        let line = record[0].0;
        let get = |k: &str| record.iter().find(|(_, key, _)| key == k).map(|(_, _, v)| v.as_str());
        if let Some(d) = get("date") {
            match parse_timestamp_with(d, order) {
                Ok(tp) => {
                    pending.stamp(tp);
                    *current = Some(tp);
                }
                Err(_) => pending.warn(
                    &doc.report_id,
                    line,
                    WarningKind::SkippedRow {
                        reason: format!("unparseable date `{d}`"),
                    },
                ),
            }
        }
        if let (Some(name), Some(value)) = (get("metric"), get("value")) {
            let unit = get("unit").filter(|u| !u.is_empty());
            if let Some(found) = tabular_measurement(doc, lexicon, line, name, value, unit, *current, pending) {
                pending.found.push(found);
            }
        }
        record.clear();
    };
    for (i, raw) in doc.lines.iter().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            flush(&mut record, &mut pending, &mut current);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let split = line.split_once(':').or_else(|| line.split_once('='));
        match split {
            Some((k, v)) => record.push((i + 1, k.trim().to_ascii_lowercase(), v.trim().to_string())),
            None => pending.warn(
                &doc.report_id,
                i + 1,
                WarningKind::SkippedRow {
                    reason: "expected `key: value`".into(),
                },
            ),
        }
    }
    flush(&mut record, &mut pending, &mut current);
    pending
}

fn scan_csv(doc: &ReportDocument, lexicon: &MetricLexicon, order: DateOrder) -> Result<Pending, IngestError> {
    let mut pending = Pending::default();
    if doc.lines.is_empty() {
        return Ok(pending);
    }
    let text = doc.lines.join("\n");
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let bad = |reason: String| IngestError::InvalidCsv {
        report_id: doc.report_id.clone(),
        reason,
    };
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let expected = ["date", "metric", "value", "unit"];
    let actual: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if actual != expected {
        return Err(bad(format!(
            "header must be `date,metric,value,unit`, got `{}`",
            actual.join(",")
        )));
    }
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 4 {
            pending.warn(
                &doc.report_id,
                line,
                WarningKind::SkippedRow {
                    reason: format!("expected 4 fields, got {}", record.len()),
                },
            );
            continue;
        }
        let time = match parse_timestamp_with(&record[0], order) {
            Ok(tp) => tp,
            Err(_) => {
                pending.warn(
                    &doc.report_id,
                    line,
                    WarningKind::SkippedRow {
                        reason: format!("unparseable date `{}`", &record[0]),
                    },
                );
                continue;
            }
        };
        pending.stamp(time);
        let unit = Some(&record[3]).filter(|u| !u.is_empty());
        if let Some(found) = tabular_measurement(
            doc,
            lexicon,
            line,
            &record[1],
            &record[2],
            unit,
            Some(time),
            &mut pending,
        ) {
            pending.found.push(found);
        }
    }
    Ok(pending)
}

#[allow(clippy::too_many_arguments)]
fn tabular_measurement(
    doc: &ReportDocument,
    lexicon: &MetricLexicon,
    line: usize,
    name: &str,
    value: &str,
    unit: Option<&str>,
    time: Option<TimePoint>,
    pending: &mut Pending,
) -> Option<Found> {
    let Some(entry) = lexicon.lookup(name) else {
        pending.warn(
            &doc.report_id,
            line,
            WarningKind::UnknownMetric { name: name.to_string() },
        );
        return None;
    };
    let Some(value) = measurement::parse_decimal(value) else {
        pending.warn(
            &doc.report_id,
            line,
            WarningKind::MalformedNumber {
                metric: entry.canonical_name.clone(),
                token: value.to_string(),
            },
        );
        return None;
    };
    let (resolved, unit_mismatch) = measurement::resolve_unit(entry, unit);
    Some(Found {
        line,
        metric: entry.canonical_name.clone(),
        value,
        unit: resolved,
        unit_mismatch,
        found_unit: if unit_mismatch { unit.map(String::from) } else { None },
        time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon() -> MetricLexicon {
        MetricLexicon::parse("HbA1c|A1c|%|4..5.6\nGlucose|FBG|mg/dL|70..99\n").unwrap()
    }

    fn tp(s: &str) -> TimePoint {
        s.parse().unwrap()
    }

    #[test]
    fn date_then_measurement() {
        let doc = ReportDocument::from_lines("r1", ["2021-03-14", "HbA1c: 7.2 %"]);
        let ex = extract_observations(&doc, &lexicon()).unwrap();
        assert_eq!(ex.observations.len(), 1);
        let o = &ex.observations[0];
        assert_eq!((o.metric.as_str(), o.value, o.unit.as_str()), ("HbA1c", 7.2, "%"));
        assert_eq!(o.time, tp("2021-03-14"));
        assert_eq!(o.source.as_str(), "r1");
        assert!(o.flags.contains(&ObservationFlag::OutOfRange));
        assert!(ex.warnings.is_empty());
    }

    #[test]
    fn empty_document_yields_nothing() {
        let doc = ReportDocument::from_lines::<&str>("r1", []);
        assert_eq!(extract_observations(&doc, &lexicon()).unwrap(), Extraction::default());
    }

    #[test]
    fn measurement_without_any_timestamp_fails() {
        let doc = ReportDocument::from_lines("r1", ["HbA1c: 7.2 %"]);
        assert!(matches!(
            extract_observations(&doc, &lexicon()),
            Err(IngestError::NoTimestampInDocument { .. })
        ));
    }

    #[test]
    fn header_date_covers_leading_measurements() {
        let doc = ReportDocument::from_lines(
            "r1",
            [
                "A1c 6.1 %",
                "Visit 2021-05-02",
                "Glucose 88 mg/dL",
                "2021-06-01 FBG 91 mg/dL",
            ],
        );
        let ex = extract_observations(&doc, &lexicon()).unwrap();
        let times: Vec<_> = ex.observations.iter().map(|o| o.time.to_string()).collect();
        assert_eq!(times, ["2021-05-02", "2021-05-02", "2021-06-01"]);
        let metrics: Vec<_> = ex.observations.iter().map(|o| o.metric.as_str()).collect();
        assert_eq!(metrics, ["HbA1c", "Glucose", "Glucose"]);
    }

    #[test]
    fn unit_mismatch_is_flagged_and_warned() {
        let doc = ReportDocument::from_lines("r1", ["2021-03-14", "Glucose 110 mmol"]);
        let ex = extract_observations(&doc, &lexicon()).unwrap();
        let o = &ex.observations[0];
        assert_eq!(o.unit, "");
        assert!(o.flags.contains(&ObservationFlag::UnitMismatch));
        assert_eq!(ex.warnings.len(), 1);
        assert_eq!(ex.warnings[0].line, 2);
        assert!(matches!(&ex.warnings[0].kind, WarningKind::UnitMismatch { found: Some(u), .. } if u == "mmol"));
    }

    #[test]
    fn malformed_number_is_a_warning() {
        let doc = ReportDocument::from_lines("r1", ["2021-03-14", "HbA1c 7,2 %", "HbA1c 1e3 %"]);
        let ex = extract_observations(&doc, &lexicon()).unwrap();
        assert!(ex.observations.is_empty());
        assert_eq!(ex.warnings.len(), 2);
    }

    #[test]
    fn csv_report() {
        let mut doc = ReportDocument::from_lines(
            "lab",
            [
                "date,metric,value,unit",
                "2021-03-14,glucose,101,mg/dL",
                "14/03/2021 08:00,A1c,5.1,%",
                "2021-03-15,Sodium,140,mmol/L",
                "bad,Glucose,1,mg/dL",
            ],
        );
        doc.format = ReportFormat::Csv;
        let ex = extract_observations(&doc, &lexicon()).unwrap();
        assert_eq!(ex.observations.len(), 2);
        assert_eq!(ex.observations[1].time, tp("2021-03-14T08:00"));
        assert_eq!(ex.warnings.len(), 2);
        assert!(matches!(ex.warnings[0].kind, WarningKind::UnknownMetric { .. }));
        assert_eq!(ex.warnings[0].line, 4);
    }

    #[test]
    fn csv_header_is_checked() {
        let mut doc = ReportDocument::from_lines("lab", ["when,what,value,unit"]);
        doc.format = ReportFormat::Csv;
        assert!(matches!(
            extract_observations(&doc, &lexicon()),
            Err(IngestError::InvalidCsv { .. })
        ));
    }

    #[test]
    fn structured_records() {
        let mut doc = ReportDocument::from_lines(
            "rec",
            [
                "date: 2021-03-14",
                "metric: HbA1c",
                "value: 5.0",
                "unit: %",
                "",
                "metric = FBG",
                "value = 90",
                "unit = mg/dL",
            ],
        );
        doc.format = ReportFormat::StructuredRecords;
        let ex = extract_observations(&doc, &lexicon()).unwrap();
        assert_eq!(ex.observations.len(), 2);
        assert!(ex.observations.iter().all(|o| o.time == tp("2021-03-14")));
        assert_eq!(ex.observations[1].metric, "Glucose");
    }

    #[test]
    fn load_report_infers_format_and_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("visit.txt");
        std::fs::write(&path, "Patient ID: P-17\n2021-03-14\nHbA1c 6 %\n").unwrap();
        let doc = load_report(&path, None).unwrap();
        assert_eq!(doc.lines.len(), 3);
        assert_eq!(doc.format, ReportFormat::PlainText);
        assert_eq!(doc.report_id.as_str(), "visit");
        assert_eq!(doc.patient_id.as_deref(), Some("P-17"));

        let empty = dir.path().join("empty.txt");
        std::fs::write(&empty, "").unwrap();
        assert!(load_report(&empty, None).unwrap().lines.is_empty());

        let unknown = dir.path().join("a.xyz");
        std::fs::write(&unknown, "x").unwrap();
        assert!(matches!(
            load_report(&unknown, None),
            Err(IngestError::UnknownFormat { .. })
        ));
        assert_eq!(
            load_report(&unknown, Some(ReportFormat::PlainText)).unwrap().lines,
            vec!["x".to_string()]
        );

        let binary = dir.path().join("bin.txt");
        std::fs::write(&binary, [0xff, 0xfe, 0x00]).unwrap();
        assert!(matches!(
            load_report(&binary, None),
            Err(IngestError::Undecodable { .. })
        ));
        assert!(matches!(
            load_report(&dir.path().join("missing.txt"), None),
            Err(IngestError::Io { .. })
        ));
    }
}
