use std::sync::LazyLock;

use regex::Regex;

use super::lexicon::{LexiconEntry, MetricLexicon};

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Canonical metric name.
    pub metric: String,
    pub value: f64,
    /// Empty when the token after the value is not an expected unit.
    pub unit: String,
    pub unit_mismatch: bool,
    /// The unit-position token when it was rejected.
    pub found_unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementParse {
    NoMatch,
    Found(Measurement),
    /// An alias matched but the first numeric token is not a plain decimal.
    Malformed {
        metric: String,
        token: String,
    },
}

impl MeasurementParse {
    pub fn found(self) -> Option<Measurement> {
        match self {
            MeasurementParse::Found(m) => Some(m),
            _ => None,
        }
    }
}

static DECIMAL_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[+-]?\d+(?:\.\d+)?$").expect("decimal pattern"));
static LEADING_DECIMAL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([+-]?\d+(?:\.\d+)?)(.*)$").expect("leading decimal pattern"));
static DATE_LIKE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:\d{1,4}[-/]\d{1,2}[-/]\d{1,4}|\d{1,2}:\d{2})$").expect("date-like pattern"));

/// Decimal with optional sign and fraction, no exponent.
pub(crate) fn parse_decimal(token: &str) -> Option<f64> {
    let token = token.trim();
    if !DECIMAL_RE.is_match(token) {
        return None;
    }
    token.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub(crate) fn resolve_unit(entry: &LexiconEntry, candidate: Option<&str>) -> (String, bool) {
    if entry.expected_units.is_empty() {
        return (String::new(), false);
    }
    match candidate.and_then(|c| entry.expected_unit(c)) {
        Some(u) => (u.to_string(), false),
        None => (String::new(), true),
    }
}

fn clean(token: &str) -> &str {
    token.trim_matches(|c| matches!(c, ':' | '=' | ',' | ';' | '(' | ')'))
}

/// Recognizes `<alias> ... <decimal> [unit]` in a free-text line.
///
/// The longest alias wins (leftmost on ties). The value is the first token
/// after the alias that contains a digit and is not a date or clock time.
/// A unit may be glued to the number (`110mg/dL`) or be the next token.
pub fn parse_measurement(line: &str, lexicon: &MetricLexicon) -> MeasurementParse {
    let Some(hit) = lexicon.find_alias(line) else {
        return MeasurementParse::NoMatch;
    };
    let entry = lexicon.entry_at(hit.entry);
    let metric = entry.canonical_name.clone();
    let mut tokens = line[hit.end..].split_whitespace().map(clean).filter(|t| !t.is_empty());
    while let Some(token) = tokens.next() {
        if !token.bytes().any(|b| b.is_ascii_digit()) || DATE_LIKE_RE.is_match(token) {
            continue;
        }
        let malformed = || MeasurementParse::Malformed {
            metric: metric.clone(),
            token: token.to_string(),
        };
        let Some(caps) = LEADING_DECIMAL_RE.captures(token) else {
            return malformed();
        };
        let suffix = &caps[2];
        if suffix.starts_with(['.', ',']) || suffix.bytes().any(|b| b.is_ascii_digit()) {
            return malformed();
        }
        let Some(value) = parse_decimal(&caps[1]) else {
            return malformed();
        };
        let candidate = if suffix.is_empty() {
            tokens.next().map(String::from)
        } else {
            Some(suffix.to_string())
        };
        let (unit, unit_mismatch) = resolve_unit(entry, candidate.as_deref());
        return MeasurementParse::Found(Measurement {
            metric,
            value,
            unit,
            unit_mismatch,
            found_unit: if unit_mismatch { candidate } else { None },
        });
    }
    MeasurementParse::NoMatch
}
