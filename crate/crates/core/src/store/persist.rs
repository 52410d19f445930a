//! Line-oriented text store. See `docs/formats.md` for the grammar.
//!
//! ```text
//! chronofuse-store<TAB>1
//! granularity<TAB>week
//! column<TAB>metric<TAB>unit<TAB>range<TAB>source,source
//! row<TAB>2021-03-08<TAB>metric=value@source@time,...;metric=...
//! end<TAB>columns<TAB>rows
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use super::{Cell, CellEntry, ColumnDescriptor, SliceGranularity, StoreError, TemporalTable, TimeSlice};
use crate::charts::RefRange;
use crate::ingest::{ReportId, TimePoint};

pub const STORE_MAGIC: &str = "chronofuse-store";
pub const STORE_VERSION: &str = "1";

const RESERVED: &[char] = &['%', '\t', '\n', '\r', ';', ',', '=', '@'];

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if RESERVED.contains(&c) {
            out.push_str(&format!("%{:02X}", c as u32));
        } else {
            out.push(c);
        }
    }
    out
}

pub(crate) fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '%' {
            let hex: String = chars.by_ref().take(2).collect();
            let code = u8::from_str_radix(&hex, 16).ok().filter(|_| hex.len() == 2)?;
            out.push(code as char);
        } else {
            out.push(c);
        }
    }
    Some(out)
}

impl TemporalTable {
    pub fn to_store_text(&self) -> String {
        let mut out = format!("{STORE_MAGIC}\t{STORE_VERSION}\ngranularity\t{}\n", self.granularity);
        for col in self.columns.values() {
            let range = match &col.reference_range {
                None => "-".to_string(),
                Some(r) => format!("{},{},{}", r.low, r.high, escape(&r.unit)),
            };
            let sources: Vec<String> = col.source_reports.iter().map(|s| escape(s.as_str())).collect();
            out.push_str(&format!(
                "column\t{}\t{}\t{}\t{}\n",
                escape(&col.metric),
                escape(&col.unit),
                range,
                sources.join(",")
            ));
        }
        for (slice, cells) in &self.rows {
            let cells: Vec<String> = cells
                .iter()
                .map(|(metric, cell)| {
                    let entries: Vec<String> = cell
                        .entries
                        .iter()
                        .map(|e| format!("{}@{}@{}", e.value, escape(e.source.as_str()), e.time))
                        .collect();
                    format!("{}={}", escape(metric), entries.join(","))
                })
                .collect();
            out.push_str(&format!("row\t{}\t{}\n", slice.start, cells.join(";")));
        }
        out.push_str(&format!("end\t{}\t{}\n", self.columns.len(), self.rows.len()));
        out
    }

    pub fn from_store_text(text: &str) -> Result<Self, StoreError> {
        Parser::default().parse(text)
    }
}

/// Writes via a temporary file in the target directory, then renames.
pub fn save_table(table: &TemporalTable, path: &Path) -> Result<(), StoreError> {
    write_atomic(path, table.to_store_text().as_bytes()).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_table(path: &Path) -> Result<TemporalTable, StoreError> {
    let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    TemporalTable::from_store_text(&text)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[derive(Default)]
struct Parser {
    line: usize,
}

impl Parser {
    fn err(&self, reason: impl Into<String>) -> StoreError {
        StoreError::MalformedStore {
            line: self.line,
            reason: reason.into(),
        }
    }

    fn field(&self, s: &str) -> Result<String, StoreError> {
        unescape(s).ok_or_else(|| self.err(format!("bad escape in `{s}`")))
    }

    fn number(&self, s: &str) -> Result<f64, StoreError> {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(format!("bad number `{s}`")))
    }

    fn parse(mut self, text: &str) -> Result<TemporalTable, StoreError> {
        let mut lines = text.lines();
        self.line = 1;
        let header = lines.next().ok_or_else(|| self.err("empty store"))?;
        match header.split_once('\t') {
            Some((STORE_MAGIC, STORE_VERSION)) => {}
            Some((STORE_MAGIC, other)) => {
                return Err(StoreError::VersionMismatch {
                    found: other.to_string(),
                })
            }
            _ => return Err(self.err("missing store header")),
        }
        self.line = 2;
        let granularity: SliceGranularity = match lines.next().and_then(|l| l.split_once('\t')) {
            Some(("granularity", g)) => g.parse().map_err(|e: String| self.err(e))?,
            _ => return Err(self.err("missing granularity line")),
        };

        let mut columns: BTreeMap<String, ColumnDescriptor> = BTreeMap::new();
        let mut rows: BTreeMap<TimeSlice, BTreeMap<String, Cell>> = BTreeMap::new();
        let mut ended = false;
        for raw in lines {
            self.line += 1;
            if ended {
                return Err(self.err("content after end record"));
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            match fields.as_slice() {
                ["column", metric, unit, range, sources] => {
                    if !rows.is_empty() {
                        return Err(self.err("column record after row records"));
                    }
                    let col = self.column(metric, unit, range, sources)?;
                    if columns.insert(col.metric.clone(), col).is_some() {
                        return Err(self.err("duplicate column"));
                    }
                }
                ["row", start, cells] => {
                    let start: NaiveDate = start.parse().map_err(|_| self.err(format!("bad date `{start}`")))?;
                    let slice = TimeSlice::aligned(start, granularity)
                        .ok_or_else(|| self.err(format!("{start} is not a {granularity} boundary")))?;
                    let cells = self.cells(cells, &columns)?;
                    if rows.insert(slice, cells).is_some() {
                        return Err(self.err("duplicate row"));
                    }
                }
                ["end", ncols, nrows] => {
                    let counts = (ncols.parse::<usize>().ok(), nrows.parse::<usize>().ok());
                    if counts != (Some(columns.len()), Some(rows.len())) {
                        return Err(self.err("record counts do not match end record"));
                    }
                    ended = true;
                }
                _ => return Err(self.err(format!("unrecognized record `{raw}`"))),
            }
        }
        if !ended {
            return Err(self.err("missing end record (truncated store?)"));
        }
        Ok(TemporalTable::from_parts(granularity, columns, rows))
    }

    fn column(&self, metric: &str, unit: &str, range: &str, sources: &str) -> Result<ColumnDescriptor, StoreError> {
        let reference_range = if range == "-" {
            None
        } else {
            let parts: Vec<&str> = range.split(',').collect();
            let [low, high, unit] = parts.as_slice() else {
                return Err(self.err(format!("bad range `{range}`")));
            };
            Some(RefRange {
                low: self.number(low)?,
                high: self.number(high)?,
                unit: self.field(unit)?,
            })
        };
        let source_reports = sources
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| self.field(s).map(ReportId::new))
            .collect::<Result<BTreeSet<_>, _>>()?;
        Ok(ColumnDescriptor {
            metric: self.field(metric)?,
            unit: self.field(unit)?,
            reference_range,
            source_reports,
        })
    }

    fn cells(
        &self,
        text: &str,
        columns: &BTreeMap<String, ColumnDescriptor>,
    ) -> Result<BTreeMap<String, Cell>, StoreError> {
        let mut cells = BTreeMap::new();
        for cell in text.split(';') {
            let (metric, entries) = cell
                .split_once('=')
                .ok_or_else(|| self.err(format!("bad cell `{cell}`")))?;
            let metric = self.field(metric)?;
            if !columns.contains_key(&metric) {
                return Err(self.err(format!("cell for undeclared column `{metric}`")));
            }
            let mut parsed = Vec::new();
            for entry in entries.split(',') {
                let parts: Vec<&str> = entry.split('@').collect();
                let [value, source, time] = parts.as_slice() else {
                    return Err(self.err(format!("bad cell entry `{entry}`")));
                };
                let time: TimePoint = time.parse().map_err(|_| self.err(format!("bad time `{time}`")))?;
                parsed.push(CellEntry {
                    value: self.number(value)?,
                    source: ReportId::new(self.field(source)?),
                    time,
                });
            }
            if cells.insert(metric, Cell::new(parsed)).is_some() {
                return Err(self.err("duplicate cell"));
            }
        }
        Ok(cells)
    }
}
