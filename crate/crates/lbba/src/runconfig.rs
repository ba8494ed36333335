//! Sectioned key/value run configuration. Unknown sections or keys are
//! rejected so typos fail loudly; every run persists its resolved form.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Section = BTreeMap<String, String>;

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub sections: BTreeMap<String, Section>,
    /// The resolved text (for persisting next to outputs).
    pub text: String,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("data", &["dir", "dataset", "image_size"]),
    ("output", &["dir"]),
    (
        "surrogate",
        &[
            "family",
            "width",
            "num_classes",
            "objective",
            "n_per_class",
            "n_total",
            "epochs",
            "batch_size",
            "lr_start",
            "lr_end",
            "momentum",
            "weight_decay",
            "temperature",
            "augmentation",
            "seed",
        ],
    ),
    ("targets", &["specs", "epochs", "batch_size", "lr", "momentum", "weight_decay", "subset", "seed"]),
    ("eval", &["seeds", "formats"]),
    (
        "attack",
        &[
            "surface",
            "method",
            "eps",
            "norm",
            "steps",
            "step_size",
            "tau",
            "inner_steps",
            "inner_step_size",
            "truncation",
            "metric",
            "guide",
            "mi_decay",
            "di_prob",
            "ti_kernel_size",
            "ti_sigma",
            "batch_size",
            "inner_space",
        ],
    ),
    ("sweep", &["samples", "layers", "examples", "seeds"]),
];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim().to_string();
                let base = name.split(':').next().unwrap_or("").to_string();
                if !KNOWN.iter().any(|(s, _)| *s == base) {
                    return Err(ConfigError(format!("line {}: unknown section [{name}]", lineno + 1)));
                }
                if sections.contains_key(&name) {
                    return Err(ConfigError(format!("line {}: duplicate section [{name}]", lineno + 1)));
                }
                sections.insert(name.clone(), Section::new());
                current = Some(name);
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!("line {}: expected key = value", lineno + 1)));
            };
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            let Some(section) = current.clone() else {
                return Err(ConfigError(format!("line {}: key outside any section", lineno + 1)));
            };
            let base = section.split(':').next().unwrap_or("").to_string();
            let allowed = KNOWN.iter().find(|(s, _)| *s == base).map(|(_, k)| *k).unwrap();
            if !allowed.contains(&key.as_str()) {
                return Err(ConfigError(format!(
                    "line {}: unknown key '{key}' in section [{section}]",
                    lineno + 1
                )));
            }
            let sec = sections.get_mut(&section).unwrap();
            if sec.contains_key(&key) {
                return Err(ConfigError(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            sec.insert(key, value);
        }
        Ok(Self { sections, text: text.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(key)).map(|s| s.as_str())
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str, ConfigError> {
        self.get(section, key)
            .ok_or_else(|| ConfigError(format!("missing required key '{key}' in section [{section}]")))
    }

    pub fn parse_val<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| ConfigError(format!("[{section}] {key} = {raw}: {e}"))),
        }
    }

    pub fn parse_or<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parse_val(section, key)?.unwrap_or(default))
    }

    /// All `[attack:NAME]` sections in file order of their names.
    pub fn attack_sections(&self) -> Vec<(String, &Section)> {
        self.sections
            .iter()
            .filter_map(|(name, sec)| {
                name.strip_prefix("attack:").map(|label| (label.to_string(), sec))
            })
            .collect()
    }

    /// Dataset root: [data].dir, falling back to LBBA_DATA_DIR.
    pub fn data_dir(&self) -> Result<PathBuf, ConfigError> {
        if let Some(d) = self.get("data", "dir") {
            return Ok(PathBuf::from(d));
        }
        std::env::var("LBBA_DATA_DIR")
            .map(PathBuf::from)
            .map_err(|_| ConfigError("no [data] dir and LBBA_DATA_DIR unset".into()))
    }

    pub fn output_dir(&self) -> Result<PathBuf, ConfigError> {
        Ok(PathBuf::from(self.require("output", "dir")?))
    }
}
