//! Observation archive: every extracted observation plus the lexicon's
//! reference ranges, so a table can be re-fused at any granularity.
//!
//! ```text
//! chronofuse-archive<TAB>1
//! range<TAB>metric<TAB>low<TAB>high<TAB>unit
//! obs<TAB>report<TAB>time<TAB>metric<TAB>value<TAB>unit<TAB>flag,flag
//! end<TAB>ranges<TAB>observations
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::charts::RefRange;
use crate::ingest::{MetricLexicon, Observation, ObservationFlag, ReportId, TimePoint};
use crate::store::persist::{escape, unescape, write_atomic};
use crate::store::StoreError;

pub const ARCHIVE_MAGIC: &str = "chronofuse-archive";
pub const ARCHIVE_VERSION: &str = "1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    pub ranges: BTreeMap<String, RefRange>,
    pub observations: Vec<Observation>,
}

fn flag_str(f: ObservationFlag) -> &'static str {
    match f {
        ObservationFlag::UnitMismatch => "unit_mismatch",
        ObservationFlag::OutOfRange => "out_of_range",
    }
}

impl Archive {
    pub fn new(lexicon: &MetricLexicon, observations: Vec<Observation>) -> Self {
        let ranges = lexicon
            .entries()
            .iter()
            .filter_map(|e| e.reference_range.clone().map(|r| (e.canonical_name.clone(), r)))
            .collect();
        Archive { ranges, observations }
    }

    pub fn reports(&self) -> BTreeSet<&ReportId> {
        self.observations.iter().map(|o| &o.source).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{ARCHIVE_MAGIC}\t{ARCHIVE_VERSION}\n");
        for (metric, r) in &self.ranges {
            out.push_str(&format!(
                "range\t{}\t{}\t{}\t{}\n",
                escape(metric),
                r.low,
                r.high,
                escape(&r.unit)
            ));
        }
        for o in &self.observations {
            let flags: Vec<&str> = o.flags.iter().map(|f| flag_str(*f)).collect();
            out.push_str(&format!(
                "obs\t{}\t{}\t{}\t{}\t{}\t{}\n",
                escape(o.source.as_str()),
                o.time,
                escape(&o.metric),
                o.value,
                escape(&o.unit),
                if flags.is_empty() {
                    "-".to_string()
                } else {
                    flags.join(",")
                }
            ));
        }
        out.push_str(&format!("end\t{}\t{}\n", self.ranges.len(), self.observations.len()));
        out
    }

    pub fn from_text(text: &str) -> Result<Self, StoreError> {
        let mut lines = text.lines().enumerate();
        let bad = |line: usize, reason: String| StoreError::MalformedStore { line: line + 1, reason };
        match lines.next() {
            Some((_, header)) => match header.split_once('\t') {
                Some((ARCHIVE_MAGIC, ARCHIVE_VERSION)) => {}
                Some((ARCHIVE_MAGIC, v)) => return Err(StoreError::VersionMismatch { found: v.to_string() }),
                _ => return Err(bad(0, "not an observation archive".into())),
            },
            None => return Err(bad(0, "empty file".into())),
        }
        let mut archive = Archive::default();
        let mut ended = false;
        for (n, line) in lines {
            if ended {
                return Err(bad(n, "content after end record".into()));
            }
            let field = |s: &str| unescape(s).ok_or_else(|| bad(n, format!("bad escape in `{s}`")));
            let number = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(n, format!("bad number `{s}`")))
            };
            let parts: Vec<&str> = line.split('\t').collect();
            match parts.as_slice() {
                ["range", metric, low, high, unit] => {
                    let range =
                        RefRange::new(number(low)?, number(high)?, field(unit)?).map_err(|e| bad(n, e.to_string()))?;
                    archive.ranges.insert(field(metric)?, range);
                }
                ["obs", report, time, metric, value, unit, flags] => {
                    let time: TimePoint = time.parse().map_err(|_| bad(n, format!("bad time `{time}`")))?;
                    let flags = if *flags == "-" {
                        BTreeSet::new()
                    } else {
                        flags
                            .split(',')
                            .map(|f| match f {
                                "unit_mismatch" => Ok(ObservationFlag::UnitMismatch),
                                "out_of_range" => Ok(ObservationFlag::OutOfRange),
                                other => Err(bad(n, format!("unknown flag `{other}`"))),
                            })
                            .collect::<Result<_, _>>()?
                    };
                    archive.observations.push(Observation {
                        metric: field(metric)?,
                        value: number(value)?,
                        unit: field(unit)?,
                        time,
                        source: ReportId::new(field(report)?),
                        flags,
                    });
                }
                ["end", ranges, obs] => {
                    let counts = (ranges.parse::<usize>().ok(), obs.parse::<usize>().ok());
                    if counts != (Some(archive.ranges.len()), Some(archive.observations.len())) {
                        return Err(bad(n, "end record counts do not match".into()));
                    }
                    ended = true;
                }
                _ => return Err(bad(n, format!("unrecognized record `{line}`"))),
            }
        }
        if !ended {
            return Err(bad(text.lines().count(), "missing end record (truncated file?)".into()));
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        write_atomic(path, self.to_text().as_bytes()).map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// True when `text` starts with the archive header line.
pub fn is_archive(text: &str) -> bool {
    text.split(['\t', '\n']).next() == Some(ARCHIVE_MAGIC)
}
