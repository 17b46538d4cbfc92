use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// Keys a config file may set. Each one mirrors the flag of the same name.
pub const KEYS: &[&str] = &[
    "arrivals",
    "cbudget",
    "cs",
    "ct",
    "dat",
    "every",
    "format",
    "gamma",
    "horizon",
    "jobs",
    "k",
    "k-inf",
    "lambda",
    "m",
    "max-iters",
    "mu",
    "n",
    "out",
    "pretty",
    "replications",
    "scheme",
    "seed",
    "step",
    "w",
    "w0",
    "warmup",
    "x0",
];

/// Values read from a flat `name = value` file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
        ConfigFile::parse(&text).map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<ConfigFile, String> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `name = value`", i + 1))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(format!("line {}: unknown key `{key}`", i + 1));
            }
            if value.is_empty() {
                return Err(format!("line {}: `{key}` has no value", i + 1));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(format!("line {}: `{key}` set twice", i + 1));
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        debug_assert!(KEYS.contains(&key), "{key}");
        self.values
            .get(key)
            .map(|v| v.parse().map_err(|e| CliError::Usage(format!("config key `{key}`: {e}"))))
            .transpose()
    }

    /// The flag value if given, else the file value.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// Like [`pick`](Self::pick) but the value must come from somewhere.
    pub fn require<T>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.pick(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("missing --{key} (flag or config key `{key}`)")))
    }

    /// A boolean switch: set by the flag or by `key = true` in the file.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        Ok(flag || self.get::<bool>(key)?.unwrap_or(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let c = ConfigFile::parse("# costs\nlambda = 0.8\n  mu=1   # service\n\ncs = 0.1\n").unwrap();
        assert_eq!(c.get::<f64>("lambda").unwrap(), Some(0.8));
        assert_eq!(c.get::<f64>("mu").unwrap(), Some(1.0));
        assert_eq!(c.get::<f64>("gamma").unwrap(), None);
    }

    #[test]
    fn flags_override_file() {
        let c = ConfigFile::parse("lambda = 0.8").unwrap();
        assert_eq!(c.pick(Some(0.5), "lambda").unwrap(), Some(0.5));
        assert_eq!(c.pick(None::<f64>, "lambda").unwrap(), Some(0.8));
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed_lines() {
        assert!(ConfigFile::parse("lamda = 1").unwrap_err().contains("unknown key `lamda`"));
        assert!(ConfigFile::parse("mu = 1\nmu = 2").unwrap_err().contains("set twice"));
        assert!(ConfigFile::parse("mu 1").unwrap_err().contains("line 1"));
        assert!(ConfigFile::parse("mu =").unwrap_err().contains("no value"));
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let c = ConfigFile::parse("mu = fast\npretty = yes").unwrap();
        assert!(matches!(c.get::<f64>("mu"), Err(CliError::Usage(_))));
        assert!(c.switch(false, "pretty").is_err());
        assert!(c.require::<f64>(None, "lambda").unwrap_err().to_string().contains("--lambda"));
    }
}
