//! Versioned JSON files: models, command outputs and item sets.

use std::fs;
use std::io::Write;
use std::path::Path;

use groupcf_core::studygen::Study;
use groupcf_core::Model;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;

/// How the training data was split, so later commands rebuild the same
/// training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub split: SplitSpec,
    #[serde(flatten)]
    pub model: Model,
}

impl ModelFile {
    pub fn new(model: Model, split: SplitSpec) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            split,
            model,
        }
    }
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    write_json(Some(path), file)
}

/// Any file that is not a well-formed model of the current version is
/// reported as a version mismatch.
pub fn load_model(path: &Path) -> Result<ModelFile> {
    load_versioned(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSetFile<C> {
    pub format_version: u32,
    pub command: String,
    pub config: C,
    pub study: Study,
}

pub fn load_item_sets(path: &Path) -> Result<ItemSetFile<serde_json::Value>> {
    load_versioned(path)
}

fn load_versioned<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })?;
    let mismatch = |detail: String| CliError::FormatVersionMismatch {
        path: path.into(),
        expected: FORMAT_VERSION,
        detail,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| mismatch(e.to_string()))?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => return Err(mismatch(format!("found version {v}"))),
        None => return Err(mismatch("no format_version".into())),
    }
    serde_json::from_value(value).map_err(|e| mismatch(e.to_string()))
}

/// Pretty JSON with a trailing newline, to `path` or stdout.
pub fn write_json<T: Serialize + ?Sized>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.unwrap_or(Path::new("-")).into(),
        source,
    })?;
    text.push('\n');
    match path {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io {
            path: p.into(),
            source,
        }),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: "-".into(),
                source,
            }),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.into(),
        source,
    })
}
