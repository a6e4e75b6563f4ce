//! `key = value` settings files.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Values may be wrapped in double quotes. Unknown keys and repeated keys
//! are errors.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::CliError;

/// Every key a settings file may contain.
pub const KEYS: &[&str] = &[
    // page
    "page_width",
    "page_height",
    "margin",
    // engine
    "n_max",
    "fr_thr",
    "mini_num",
    "small_area_frac",
    "candidate_set_size",
    "strata",
    "scale_min",
    "scale_max",
    "gutter_px",
    // augmentation
    "min_count",
    "p_flip",
    "p_bc",
    "p_crop",
    "p_edge",
    "crop_area_min",
    "crop_area_max",
    "bc_delta",
    "elastic_alpha",
    "elastic_sigma",
    "noise_std",
    // run
    "seed",
    "pool_seed",
    "count",
    "method",
    "threads",
    "out",
];

#[derive(Debug, Default)]
pub struct ConfigFile {
    path: Option<PathBuf>,
    values: BTreeMap<String, (String, usize)>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, Some(path.to_owned()))
    }

    pub fn parse(text: &str, path: Option<PathBuf>) -> Result<Self, CliError> {
        let name = path
            .as_deref()
            .map_or_else(|| "<config>".to_owned(), |p| p.display().to_string());
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("{name}:{line_no}: expected `key = value`"))
            })?;
            let key = k.trim();
            let mut val = v.trim();
            if val.len() >= 2 && val.starts_with('"') && val.ends_with('"') {
                val = &val[1..val.len() - 1];
            }
            if !KEYS.contains(&key) {
                return Err(CliError::Usage(format!("{name}:{line_no}: unknown key {key:?}")));
            }
            if values.insert(key.to_owned(), (val.to_owned(), line_no)).is_some() {
                return Err(CliError::Usage(format!("{name}:{line_no}: key {key:?} set twice")));
            }
        }
        Ok(Self { path, values })
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        debug_assert!(KEYS.contains(&key), "undeclared key {key}");
        let Some((raw, line)) = self.values.get(key) else {
            return Ok(None);
        };
        raw.parse().map(Some).map_err(|e| {
            let name = self
                .path
                .as_deref()
                .map_or_else(|| "<config>".to_owned(), |p| p.display().to_string());
            CliError::Usage(format!("{name}:{line}: bad value for {key}: {e}"))
        })
    }

    /// `flag`, else the file's value for `key`.
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
}
