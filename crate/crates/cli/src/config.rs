//! Flat `key=value` config files and flag/file/default resolution.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

/// Every key a config file may set. Sections are plain prefixes.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "qubo.dist",
    "qubo.n",
    "qubo.instances",
    "qubo.depth",
    "qubo.epochs",
    "qubo.lr",
    "qubo.beta1",
    "qubo.beta2",
    "qubo.init",
    "qubo.out",
    "qubo.matrix",
    "classify.dataset",
    "classify.data_dir",
    "classify.classes",
    "classify.arch",
    "classify.lr",
    "classify.beta1",
    "classify.beta2",
    "classify.batch_size",
    "classify.epochs",
    "classify.size",
    "classify.crop",
    "classify.train_limit",
    "classify.test_limit",
    "classify.init",
    "classify.checkpoint",
    "gan.dataset",
    "gan.data_dir",
    "gan.digit",
    "gan.size",
    "gan.arch_d",
    "gan.arch_g",
    "gan.lr",
    "gan.beta1",
    "gan.beta2",
    "gan.batch_size",
    "gan.epochs",
    "gan.data_size",
    "gan.loss",
    "gan.init",
    "gan.count",
    "gan.contrast",
    "gan.grid_rows",
    "gan.grid_cols",
    "gan.checkpoint",
    "gan.out",
];

/// A bad flag value or config entry; reported with exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Parses `key=value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, UsageError> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected key=value, got {line:?}", no + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if !KNOWN_KEYS.contains(&key) {
            return Err(UsageError(format!("config line {}: unknown key {key:?}", no + 1)));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(UsageError(format!("config line {}: duplicate key {key:?}", no + 1)));
        }
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<BTreeMap<String, String>, UsageError> {
    let text =
        fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Resolves each setting as flag, then file, then default, and remembers
/// the result for the manifest.
#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(file: BTreeMap<String, String>) -> Self {
        Self {
            file,
            resolved: BTreeMap::new(),
        }
    }

    fn file_value<T>(&self, key: &str) -> Result<Option<T>, UsageError>
    where
        T: FromStr,
        T::Err: Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key} missing from KNOWN_KEYS");
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| UsageError(format!("config key {key}: invalid value {raw:?}: {e}"))),
        }
    }

    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, UsageError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.file_value(key)?.unwrap_or(default),
        };
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, UsageError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    /// A boolean switch: set by the flag, else by the file, else false.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, UsageError> {
        self.value(key, flag.then_some(true), false)
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let cfg = parse_config("# run\ngan.lr = 0.05\n\nseed=3 # trailing\n").unwrap();
        assert_eq!(cfg["gan.lr"], "0.05");
        assert_eq!(cfg["seed"], "3");
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(parse_config("gan.learning_rate=1")
            .unwrap_err()
            .0
            .contains("unknown key"));
        assert!(parse_config("seed").is_err());
        assert!(parse_config("seed=1\nseed=2").is_err());
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let mut r = Resolver::new(parse_config("qubo.lr=0.05\nqubo.n=9").unwrap());
        assert_eq!(r.value("qubo.lr", Some(0.01), 0.5).unwrap(), 0.01);
        assert_eq!(r.value("qubo.n", None, 12usize).unwrap(), 9);
        assert_eq!(r.value("qubo.epochs", None, 201usize).unwrap(), 201);
        assert_eq!(r.resolved()["qubo.lr"], "0.01");
    }

    #[test]
    fn file_type_errors_are_usage_errors() {
        let mut r = Resolver::new(parse_config("qubo.lr=abc").unwrap());
        assert!(r.value("qubo.lr", None, 0.1f64).is_err());
    }
}
