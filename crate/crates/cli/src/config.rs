//! Effective settings: command-line flags over the config file over defaults.
//!
//! The config file is TOML. Top-level keys apply to every subcommand and a
//! table named after the subcommand overrides them:
//!
//! ```toml
//! seed = 7
//!
//! [train]
//! min-leaf = 8
//! trees = 200
//! ```
//!
//! Keys are flag names without the leading dashes.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

/// Renders a resolved value for the manifest.
pub trait Echo {
    fn echo(&self) -> Value;
}

macro_rules! echo_number {
    ($($t:ty),*) => {$(
        impl Echo for $t {
            fn echo(&self) -> Value {
                json!(self)
            }
        }
    )*};
}

macro_rules! echo_display {
    ($($t:ty),*) => {$(
        impl Echo for $t {
            fn echo(&self) -> Value {
                Value::String(self.to_string())
            }
        }
    )*};
}

echo_number!(u32, u64, usize, f64, bool);
echo_display!(
    String,
    chrono::NaiveDate,
    tfaml::dataset::FeatureSet,
    tfaml::spectral::WindowFn,
    tfaml::spectral::ExportFormat
);

impl Echo for PathBuf {
    fn echo(&self) -> Value {
        Value::String(self.display().to_string())
    }
}

pub struct Settings {
    file: BTreeMap<String, toml::Value>,
    source: Option<PathBuf>,
    effective: BTreeMap<String, Value>,
}

impl Settings {
    /// Loads the keys visible to `command` from `path`.
    pub fn load(path: Option<&Path>, command: &str) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            let mut section = None;
            for (k, v) in table {
                match v {
                    toml::Value::Table(t) if k == command => section = Some(t),
                    toml::Value::Table(_) => {}
                    v => {
                        file.insert(k, v);
                    }
                }
            }
            file.extend(section.into_iter().flatten());
        }
        Ok(Settings {
            file,
            source: path.map(Path::to_path_buf),
            effective: BTreeMap::new(),
        })
    }

    fn file_value<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(v) = self.file.get(key) else {
            return Ok(None);
        };
        let text = match v {
            toml::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        match text.parse() {
            Ok(t) => Ok(Some(t)),
            Err(e) => bail!("config key {key:?}: invalid value {text:?}: {e}"),
        }
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Echo,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => v,
            None => self.file_value(key)?.unwrap_or(default),
        };
        self.effective.insert(key.to_string(), value.echo());
        Ok(value)
    }

    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Echo,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        self.effective
            .insert(key.to_string(), value.as_ref().map_or(Value::Null, Echo::echo));
        Ok(value)
    }

    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr + Echo,
        T::Err: Display,
    {
        match self.optional(key, flag)? {
            Some(v) => Ok(v),
            None => bail!("missing required setting --{key}"),
        }
    }

    /// Records a derived value that has no flag of its own.
    pub fn note(&mut self, key: &str, value: impl Echo) {
        self.effective.insert(key.to_string(), value.echo());
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    pub fn effective(&self) -> &BTreeMap<String, Value> {
        &self.effective
    }
}
