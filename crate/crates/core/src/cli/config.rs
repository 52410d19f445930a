//! Flat `key = value` configuration with `#` comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::charts::Normalization;
use crate::ingest::DateOrder;
use crate::render::{DeviceClass, DeviceProfile};
use crate::store::{Aggregator, SliceGranularity};

pub const CONFIG_ENV: &str = "CHRONOFUSE_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Syntax { path: String, line: usize, reason: String },
    #[error("lexicon {0} does not exist")]
    MissingLexicon(String),
    #[error("invalid {class} profile: {reason}")]
    InvalidProfile { class: DeviceClass, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub lexicon_path: Option<PathBuf>,
    pub granularity: SliceGranularity,
    pub date_order: DateOrder,
    pub aggregator: Aggregator,
    pub normalization: Normalization,
    pub profiles: BTreeMap<DeviceClass, DeviceProfile>,
    pub out_dir: PathBuf,
    /// Where the values came from, for the report echo.
    pub source: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            lexicon_path: None,
            granularity: SliceGranularity::Week,
            date_order: DateOrder::Auto,
            aggregator: Aggregator::Mean,
            normalization: Normalization::ReferenceRange,
            profiles: DeviceClass::ALL
                .into_iter()
                .map(|c| (c, DeviceProfile::default_for(c)))
                .collect(),
            out_dir: PathBuf::from("."),
            source: None,
        }
    }
}

impl Config {
    /// Parses config text. Relative paths resolve against `base`.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self, ConfigError> {
        let mut config = Config {
            source: Some(origin.to_path_buf()),
            ..Config::default()
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| ConfigError::Syntax {
                path: origin.display().to_string(),
                line: n + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err("expected `key = value`".into()))?;
            config.set(key, value, base).map_err(err)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Config::parse(&text, path, base)
    }

    /// `--config` wins over the environment; neither means defaults.
    pub fn resolve(flag: Option<&Path>, env: Option<&Path>) -> Result<Self, ConfigError> {
        match flag.or(env) {
            Some(p) => Config::load(p),
            None => Ok(Config::default()),
        }
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), String> {
        let path = |v: &str| base.join(v);
        match key {
            "lexicon" => self.lexicon_path = Some(path(value)),
            "out" => self.out_dir = path(value),
            "granularity" => self.granularity = value.parse()?,
            "date_order" => self.date_order = value.parse()?,
            "aggregator" => self.aggregator = value.parse()?,
            "normalization" => self.normalization = value.parse()?,
            _ => {
                let (class, field) = key.split_once('.').ok_or_else(|| format!("unknown key `{key}`"))?;
                let class: DeviceClass = class.parse().map_err(|_| format!("unknown key `{key}`"))?;
                let profile = self.profiles.get_mut(&class).expect("every class has a profile");
                set_profile_field(profile, field, value).map_err(|e| format!("{key}: {e}"))?;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(lex) = &self.lexicon_path {
            if !lex.is_file() {
                return Err(ConfigError::MissingLexicon(lex.display().to_string()));
            }
        }
        for p in self.profiles.values() {
            p.validate()
                .map_err(|reason| ConfigError::InvalidProfile { class: p.class, reason })?;
        }
        Ok(())
    }

    pub fn profile(&self, class: DeviceClass) -> &DeviceProfile {
        &self.profiles[&class]
    }

    /// Effective settings as `key = value` lines, in the config file syntax.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let lexicon = self
            .lexicon_path
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "lexicon = {lexicon}");
        let _ = writeln!(out, "granularity = {}", self.granularity);
        let _ = writeln!(out, "date_order = {}", date_order_str(self.date_order));
        let _ = writeln!(out, "aggregator = {}", self.aggregator.as_str());
        let _ = writeln!(out, "normalization = {}", self.normalization.as_str());
        let _ = writeln!(out, "out = {}", self.out_dir.display());
        for p in self.profiles.values() {
            let c = p.class;
            let _ = writeln!(out, "{c}.width = {}", p.width_px);
            let _ = writeln!(out, "{c}.height = {}", p.height_px);
            let _ = writeln!(out, "{c}.dpi = {}", p.dpi);
            let _ = writeln!(out, "{c}.min_font_px = {}", p.min_font_px);
            let _ = writeln!(out, "{c}.max_blank_ratio = {}", p.max_blank_ratio);
        }
        out
    }
}

pub(crate) fn date_order_str(order: DateOrder) -> &'static str {
    match order {
        DateOrder::Auto => "auto",
        DateOrder::DayFirst => "dmy",
        DateOrder::MonthFirst => "mdy",
    }
}

fn set_profile_field(p: &mut DeviceProfile, field: &str, value: &str) -> Result<(), String> {
    let int = || {
        value
            .parse::<u32>()
            .map_err(|_| format!("`{value}` is not a whole number"))
    };
    let float = || value.parse::<f64>().map_err(|_| format!("`{value}` is not a number"));
    match field {
        "width" => p.width_px = int()?,
        "height" => p.height_px = int()?,
        "dpi" => p.dpi = int()?,
        "min_font_px" => p.min_font_px = float()?,
        "max_blank_ratio" => p.max_blank_ratio = float()?,
        other => return Err(format!("unknown profile field `{other}`")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config, ConfigError> {
        Config::parse(text, Path::new("test.conf"), Path::new("/base"))
    }

    #[test]
    fn empty_is_default() {
        let c = parse("# nothing\n\n").unwrap();
        assert_eq!(c.granularity, SliceGranularity::Week);
        assert_eq!(c.profiles, Config::default().profiles);
    }

    #[test]
    fn keys_and_profile_overrides() {
        let c = parse(
            "granularity = month\ndate_order=mdy\naggregator = last\nnormalization = min_max\nout = build\nphone.width = 400\nphone.min_font_px = 11\n",
        )
        .unwrap();
        assert_eq!(c.granularity, SliceGranularity::Month);
        assert_eq!(c.date_order, DateOrder::MonthFirst);
        assert_eq!(c.aggregator, Aggregator::Last);
        assert_eq!(c.normalization, Normalization::MinMax);
        assert_eq!(c.out_dir, PathBuf::from("/base/build"));
        let phone = c.profile(DeviceClass::Phone);
        assert_eq!((phone.width_px, phone.min_font_px), (400, 11.0));
    }

    #[test]
    fn errors_name_the_line() {
        match parse("granularity = week\nbogus = 1\n") {
            Err(ConfigError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse("granularity = fortnight").is_err());
        assert!(parse("phone.width = -3").is_err());
        assert!(parse("watch.width = 3").is_err());
        assert!(matches!(
            parse("tablet.dpi = 0"),
            Err(ConfigError::InvalidProfile { .. })
        ));
        assert!(matches!(
            parse("lexicon = missing.txt"),
            Err(ConfigError::MissingLexicon(_))
        ));
    }

    #[test]
    fn echo_round_trips() {
        let c = parse("aggregator = median\nmonitor.height = 900\n").unwrap();
        let again = parse(&c.echo().replace("lexicon = -\n", "")).unwrap();
        assert_eq!(again.aggregator, c.aggregator);
        assert_eq!(again.profiles, c.profiles);
    }
}
