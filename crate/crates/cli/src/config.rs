//! Layered settings: command-line flag (or `NSCR_*` environment variable),
//! then a `key=value` config file, then the built-in default.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use nscr_core::io::parse_key_values;

use crate::CliError;

#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    effective: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Self, CliError> {
        let file = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                parse_key_values(&text, &path.display().to_string())
                    .map_err(|e| CliError::Usage(e.to_string()))?
            }
            None => BTreeMap::new(),
        };
        Ok(Self {
            file,
            effective: BTreeMap::new(),
        })
    }

    /// Resolves `key` and records the winning value.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
    {
        let value = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(s) => s.parse().map_err(|_| {
                    CliError::Usage(format!("config key '{key}' has invalid value '{s}'"))
                })?,
                None => default,
            },
        };
        self.effective.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    /// Records a value that does not go through layering.
    pub fn note(&mut self, key: &str, value: impl Display) {
        self.effective.insert(key.to_string(), value.to_string());
    }

    pub fn effective(&self) -> &BTreeMap<String, String> {
        &self.effective
    }

    pub fn manifest(&self, command: &str) -> Vec<(String, String)> {
        let mut out = vec![
            ("command".to_string(), command.to_string()),
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ];
        out.extend(self.effective.iter().map(|(k, v)| (k.clone(), v.clone())));
        out
    }
}
