//! Run configuration: built-in defaults, a flat `key = value` file, the
//! environment and command-line flags, in increasing precedence.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, CliResult};

pub const STOPWORDS_ENV: &str = "CRISISCLASS_STOPWORDS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    Config,
    Env,
    Flag,
    /// Filled in from an input file, e.g. the embedding dimension.
    Derived,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::Config => "config",
            Source::Env => "env",
            Source::Flag => "flag",
            Source::Derived => "derived",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Setting {
    value: String,
    source: Source,
    /// Directory relative paths are resolved against.
    base: Option<PathBuf>,
}

/// Every recognised key with its default; `None` means unset.
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("tag", Some("")),
    ("arch", Some("cnn")),
    ("train", None),
    ("dev", None),
    ("test", None),
    ("vocab", None),
    ("min_count", Some("1")),
    ("embedding", None),
    ("embedding_format", Some("headerless")),
    ("embedding_dim", None),
    ("fine_tune", Some("false")),
    ("stopwords", None),
    ("strip_hash_only", Some("false")),
    ("drop_mentions", Some("false")),
    ("seq_len", Some("30")),
    ("kernel_size", Some("3")),
    ("pool_size", Some("2")),
    ("pooling", Some("local")),
    ("num_filters", Some("250")),
    ("cnn_hidden", Some("128")),
    ("lstm_hidden", Some("100")),
    ("keep_prob", Some("0.5")),
    ("optimizer", Some("adam")),
    ("learning_rate", Some("0.001")),
    ("batch_size", Some("32")),
    ("epochs", Some("25")),
    ("seed", Some("0")),
    ("shuffle", Some("true")),
    ("keep_best", Some("false")),
    ("clip_norm", None),
    ("out", Some(".")),
];

const PATH_KEYS: &[&str] = &["train", "dev", "test", "vocab", "embedding", "stopwords", "out"];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    settings: BTreeMap<&'static str, Setting>,
}

fn known(key: &str) -> Option<&'static str> {
    KEYS.iter().map(|(k, _)| *k).find(|k| *k == key)
}

impl RunConfig {
    pub fn defaults() -> Self {
        let mut cfg = RunConfig::default();
        for (k, v) in KEYS {
            if let Some(v) = v {
                cfg.set(k, v.to_string(), Source::Default, None);
            }
        }
        cfg
    }

    fn set(&mut self, key: &'static str, value: String, source: Source, base: Option<PathBuf>) {
        self.settings.insert(key, Setting { value, source, base });
    }

    /// Applies a config file; relative paths in it resolve against its
    /// directory.
    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf);
        let mut seen = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = || format!("{}:{}", path.display(), i + 1);
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("{}: expected `key = value`", at())))?;
            let k = k.trim();
            let key = known(k).ok_or_else(|| CliError::config(format!("{}: unknown key `{k}`", at())))?;
            if seen.contains(&key) {
                return Err(CliError::config(format!("{}: `{key}` set twice", at())));
            }
            seen.push(key);
            self.set(key, v.trim().to_string(), Source::Config, base.clone());
        }
        Ok(())
    }

    pub fn apply_env(&mut self) {
        if let Some(v) = std::env::var_os(STOPWORDS_ENV) {
            self.set("stopwords", v.to_string_lossy().into_owned(), Source::Env, None);
        }
    }

    pub fn apply_flag(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            let key = known(key).expect("flag maps to a known key");
            self.set(key, v, Source::Flag, None);
        }
    }

    /// Records a value computed from the inputs.
    pub fn derive(&mut self, key: &str, value: String) {
        let key = known(key).expect("known key");
        self.set(key, value, Source::Derived, None);
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.settings
            .get(key)
            .map(|s| s.value.as_str())
            .filter(|v| !v.is_empty())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| CliError::config(format!("bad value `{v}` for `{key}`: {e}")))
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| CliError::config(format!("`{key}` is required (flag --{} or config key)", key.replace('_', "-"))))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let s = self.settings.get(key)?;
        if s.value.is_empty() {
            return None;
        }
        let p = PathBuf::from(&s.value);
        Some(match &s.base {
            Some(base) if p.is_relative() => base.join(p),
            _ => p,
        })
    }

    /// A path that must name an existing file.
    pub fn existing_file(&self, key: &str) -> CliResult<Option<PathBuf>> {
        match self.path(key) {
            Some(p) if !p.is_file() => Err(CliError::config(format!("{key} file not found: {}", p.display()))),
            other => Ok(other),
        }
    }

    /// `key = value  # source` for every set key, in key order.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        for (k, _) in KEYS {
            if let Some(set) = self.settings.get(k) {
                let value = if PATH_KEYS.contains(k) {
                    self.path(k).map(|p| p.display().to_string()).unwrap_or_default()
                } else {
                    set.value.clone()
                };
                let _ = writeln!(s, "{k} = {value}  # {}", set.source);
            }
        }
        s
    }
}

/// Accepts `true`/`false` only.
pub fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected `true` or `false`, got `{s}`")),
    }
}
