//! Flat `key = value` parameter sets: built-in defaults, then a config file,
//! then command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};

/// Bad parameter or config file; reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()).into())
}

#[derive(Clone, Debug)]
enum Origin {
    Default,
    File(String, usize),
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => write!(f, "default"),
            Origin::File(path, 0) => write!(f, "{path}"),
            Origin::File(path, line) => write!(f, "{path}:{line}"),
            Origin::Flag => write!(f, "command line"),
        }
    }
}

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    origin: Origin,
}

#[derive(Clone, Debug)]
pub struct Params {
    entries: BTreeMap<String, Entry>,
}

impl Params {
    pub fn with_defaults(defaults: &[(&str, &str)]) -> Self {
        let entries = defaults
            .iter()
            .map(|(k, v)| (k.to_string(), Entry { value: v.to_string(), origin: Origin::Default }))
            .collect();
        Self { entries }
    }

    fn put(&mut self, key: &str, value: &str, origin: Origin) -> Result<()> {
        match self.entries.get_mut(key) {
            Some(e) => {
                *e = Entry { value: value.trim().to_string(), origin };
                Ok(())
            }
            None => bad(format!("{origin}: unknown key `{key}` for this subcommand")),
        }
    }

    pub fn set_flag(&mut self, key: &str, value: &str) -> Result<()> {
        self.put(key, value, Origin::Flag)
    }

    /// Reads `key = value` lines (`#` comments) or, for `.json`, the
    /// `parameters` object of a previous run manifest.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let name = path.display().to_string();
        if path.extension().is_some_and(|e| e == "json") {
            let doc: serde_json::Value = match serde_json::from_str(&text) {
                Ok(v) => v,
                Err(e) => return bad(format!("{name}:{}: {e}", e.line())),
            };
            let Some(map) = doc.get("parameters").and_then(|p| p.as_object()) else {
                return bad(format!("{name}: no `parameters` object"));
            };
            for (k, v) in map {
                let Some(s) = v.as_str() else {
                    return bad(format!("{name}: field `{k}`: expected a string value"));
                };
                self.put(k, s, Origin::File(name.clone(), 0))?;
            }
            return Ok(());
        }
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let origin = Origin::File(name.clone(), i + 1);
            let Some((k, v)) = line.split_once('=') else {
                return bad(format!("{origin}: expected `key = value`, got `{line}`"));
            };
            self.put(k.trim(), v, origin)?;
        }
        Ok(())
    }

    fn entry(&self, key: &str) -> &Entry {
        self.entries.get(key).unwrap_or_else(|| panic!("parameter `{key}` has no default"))
    }

    fn fail<T>(&self, key: &str, what: &str) -> Result<T> {
        let e = self.entry(key);
        bad(format!("{}: field `{key}`: expected {what}, got `{}`", e.origin, e.value))
    }

    pub fn str(&self, key: &str) -> &str {
        &self.entry(key).value
    }

    pub fn is_set(&self, key: &str) -> bool {
        !self.str(key).is_empty()
    }

    /// Set by a config file or flag rather than left at its default.
    pub fn explicit(&self, key: &str) -> bool {
        !matches!(self.entry(key).origin, Origin::Default)
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        match self.str(key).parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => self.fail(key, "a finite number"),
        }
    }

    pub fn positive(&self, key: &str) -> Result<f64> {
        match self.f64(key) {
            Ok(x) if x > 0.0 => Ok(x),
            _ => self.fail(key, "a positive number"),
        }
    }

    pub fn count(&self, key: &str, min: usize) -> Result<usize> {
        match self.str(key).parse::<usize>() {
            Ok(n) if n >= min => Ok(n),
            _ => self.fail(key, &format!("an integer ≥ {min}")),
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.str(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => self.fail(key, "true or false"),
        }
    }

    pub fn choice<'a>(&self, key: &str, options: &[&'a str]) -> Result<&'a str> {
        let v = self.str(key);
        match options.iter().find(|o| o.eq_ignore_ascii_case(v)) {
            Some(o) => Ok(o),
            None => self.fail(key, &format!("one of {}", options.join(", "))),
        }
    }

    /// Explicit `m` or `None` for `auto`.
    pub fn m0(&self) -> Result<Option<f64>> {
        let v = self.str("m0");
        if v == "auto" {
            return Ok(None);
        }
        match v.parse::<f64>() {
            Ok(m) if (2.0 * m).fract() == 0.0 => Ok(Some(m)),
            _ => self.fail("m0", "an integer or `auto`"),
        }
    }

    pub fn fail_with<T>(&self, key: &str, what: &str) -> Result<T> {
        self.fail(key, what)
    }

    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect()
    }
}
