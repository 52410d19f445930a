//! Metric vocabulary used for rule-based recognition of measurements.
//!
//! File grammar, one entry per line (`#` starts a comment line, blank lines
//! are skipped, trailing fields may be omitted):
//!
//! ```text
//! canonical|alias1,alias2|unit1,unit2|low..high
//! ```

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::charts::RefRange;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub canonical_name: String,
    pub aliases: BTreeSet<String>,
    pub expected_units: BTreeSet<String>,
    pub reference_range: Option<RefRange>,
}

impl LexiconEntry {
    pub fn new(canonical_name: impl Into<String>) -> Self {
        LexiconEntry {
            canonical_name: canonical_name.into(),
            aliases: BTreeSet::new(),
            expected_units: BTreeSet::new(),
            reference_range: None,
        }
    }

    pub fn alias(mut self, alias: impl Into<String>) -> Self {
        self.aliases.insert(alias.into());
        self
    }

    pub fn unit(mut self, unit: impl Into<String>) -> Self {
        self.expected_units.insert(unit.into());
        self
    }

    pub fn range(mut self, low: f64, high: f64) -> Self {
        let unit = self.expected_units.iter().next().cloned().unwrap_or_default();
        self.reference_range = Some(RefRange { low, high, unit });
        self
    }

    /// The canonical name is always an implicit alias.
    fn match_names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.canonical_name.as_str()).chain(self.aliases.iter().map(String::as_str))
    }

    /// Case-insensitive lookup of `unit` in the expected set, returning the
    /// lexicon's own spelling.
    pub fn expected_unit(&self, unit: &str) -> Option<&str> {
        self.expected_units
            .iter()
            .find(|u| u.eq_ignore_ascii_case(unit))
            .map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricLexicon {
    entries: Vec<LexiconEntry>,
    // lowercased alias -> entry index
    index: HashMap<String, usize>,
}

/// A matched alias inside a line: entry index plus byte span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct AliasMatch {
    pub entry: usize,
    pub start: usize,
    pub end: usize,
}

impl MetricLexicon {
    /// Validates uniqueness of canonical names and disjointness of aliases.
    pub fn new(entries: Vec<LexiconEntry>) -> Result<Self, IngestError> {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut canon = BTreeSet::new();
        for (i, entry) in entries.iter().enumerate() {
            let name = entry.canonical_name.trim();
            if name.is_empty() {
                return Err(IngestError::InvalidLexicon {
                    line: 0,
                    reason: "empty canonical name".into(),
                });
            }
            if !canon.insert(name.to_ascii_lowercase()) {
                return Err(IngestError::InvalidLexicon {
                    line: 0,
                    reason: format!("duplicate canonical name `{name}`"),
                });
            }
            for alias in entry.match_names() {
                let key = alias.trim().to_ascii_lowercase();
                if key.is_empty() {
                    continue;
                }
                match index.get(&key) {
                    Some(&j) if j != i => {
                        return Err(IngestError::InvalidLexicon {
                            line: 0,
                            reason: format!(
                                "alias `{alias}` shared by `{}` and `{}`",
                                entries[j].canonical_name, entry.canonical_name
                            ),
                        });
                    }
                    _ => {
                        index.insert(key, i);
                    }
                }
            }
            if let Some(r) = &entry.reference_range {
                if !(r.low < r.high) {
                    return Err(IngestError::InvalidLexicon {
                        line: 0,
                        reason: format!("reference range of `{name}` has low >= high"),
                    });
                }
            }
        }
        Ok(MetricLexicon { entries, index })
    }

    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let entry = parse_entry(line).map_err(|reason| IngestError::InvalidLexicon { line: n + 1, reason })?;
            entries.push(entry);
        }
        MetricLexicon::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        MetricLexicon::parse(&text)
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn entry(&self, canonical: &str) -> Option<&LexiconEntry> {
        self.entries.iter().find(|e| e.canonical_name == canonical)
    }

    /// Exact (case-insensitive) lookup of a name or alias.
    pub fn lookup(&self, name: &str) -> Option<&LexiconEntry> {
        self.index
            .get(&name.trim().to_ascii_lowercase())
            .map(|&i| &self.entries[i])
    }

    pub fn reference_range(&self, canonical: &str) -> Option<&RefRange> {
        self.entry(canonical).and_then(|e| e.reference_range.as_ref())
    }

    /// Longest alias occurring on word boundaries, then leftmost.
    pub(crate) fn find_alias(&self, line: &str) -> Option<AliasMatch> {
        let lower = line.to_ascii_lowercase();
        let bytes = lower.as_bytes();
        let mut best: Option<AliasMatch> = None;
        for (alias, &entry) in &self.index {
            for (start, _) in lower.match_indices(alias.as_str()) {
                let end = start + alias.len();
                let left = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
                let right = end == bytes.len() || !bytes[end].is_ascii_alphanumeric();
                if !(left && right) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some(b) => {
                        let (len, best_len) = (end - start, b.end - b.start);
                        len > best_len || (len == best_len && start < b.start)
                    }
                };
                if better {
                    best = Some(AliasMatch { entry, start, end });
                }
            }
        }
        best
    }

    pub(crate) fn entry_at(&self, i: usize) -> &LexiconEntry {
        &self.entries[i]
    }
}

fn parse_entry(line: &str) -> Result<LexiconEntry, String> {
    let fields: Vec<&str> = line.split('|').map(str::trim).collect();
    if fields.len() > 4 {
        return Err(format!("expected at most 4 `|`-separated fields, got {}", fields.len()));
    }
    let list = |i: usize| -> BTreeSet<String> {
        fields
            .get(i)
            .map(|f| {
                f.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default()
    };
    let mut entry = LexiconEntry::new(fields[0]);
    entry.aliases = list(1);
    entry.expected_units = list(2);
    if let Some(range) = fields.get(3).filter(|f| !f.is_empty()) {
        let (lo, hi) = range
            .split_once("..")
            .ok_or_else(|| format!("range `{range}` is not `low..high`"))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("bad range bound `{s}`"))
        };
        entry = entry.range(parse(lo)?, parse(hi)?);
    }
    Ok(entry)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# metric vocabulary
HbA1c|A1c,glycated hemoglobin|%|4..5.6
Glucose|glucose fasting,FBG|mg/dL|70..99

Creatinine||mg/dL
";

    #[test]
    fn parses_file_grammar() {
        let lex = MetricLexicon::parse(SAMPLE).unwrap();
        assert_eq!(lex.entries().len(), 3);
        let hba1c = lex.lookup("glycated HEMOGLOBIN").unwrap();
        assert_eq!(hba1c.canonical_name, "HbA1c");
        let r = hba1c.reference_range.as_ref().unwrap();
        assert_eq!((r.low, r.high, r.unit.as_str()), (4.0, 5.6, "%"));
        assert!(lex.lookup("creatinine").unwrap().reference_range.is_none());
    }

    #[test]
    fn overlapping_aliases_are_rejected() {
        let err = MetricLexicon::parse("A|x\nB|X\n").unwrap_err();
        assert!(matches!(err, IngestError::InvalidLexicon { .. }));
        assert!(MetricLexicon::parse("A\nB|a\n").is_err());
        assert!(MetricLexicon::parse("A\na\n").is_err());
    }

    #[test]
    fn bad_range_reports_line() {
        match MetricLexicon::parse("# c\nA||mg|5..x\n") {
            Err(IngestError::InvalidLexicon { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(MetricLexicon::parse("A||mg|5..5\n").is_err());
    }

    #[test]
    fn longest_then_leftmost_alias() {
        let lex = MetricLexicon::parse("Glucose|glucose fasting\nFasting|fasting\n").unwrap();
        let m = lex.find_alias("Glucose fasting: 90").unwrap();
        assert_eq!(lex.entry_at(m.entry).canonical_name, "Glucose");
        assert_eq!((m.start, m.end), (0, 15));

        let lex = MetricLexicon::parse("Aa\nBb\n").unwrap();
        let m = lex.find_alias("bb 1 aa 2").unwrap();
        assert_eq!(lex.entry_at(m.entry).canonical_name, "Bb");
    }

    #[test]
    fn alias_needs_word_boundaries() {
        let lex = MetricLexicon::parse("Na|sodium\n").unwrap();
        assert!(lex.find_alias("national average 5").is_none());
        assert!(lex.find_alias("Na 140").is_some());
    }
}
