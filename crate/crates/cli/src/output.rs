//! Output files: overwrite protection, JSON sidecars and CSV tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::error::ConfigError;

pub struct Outputs {
    dir: PathBuf,
    force: bool,
}

impl Outputs {
    pub fn new(dir: &Path, force: bool) -> Self {
        Self {
            dir: dir.to_path_buf(),
            force,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Fails before any work is done if an output already exists and
    /// `--force` was not given; creates the directory otherwise.
    pub fn claim(&self, names: &[&str]) -> anyhow::Result<()> {
        for name in names {
            refuse_overwrite(&self.path(name), self.force)?;
        }
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        write_json(&self.path(name), value)
    }

    pub fn write_table(&self, name: &str, header: &str, rows: &[Vec<String>]) -> anyhow::Result<()> {
        let path = self.path(name);
        let mut out = String::with_capacity(64 * (rows.len() + 1));
        out.push_str(header);
        out.push('\n');
        for row in rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        fs::write(&path, out).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn refuse_overwrite(path: &Path, force: bool) -> Result<(), ConfigError> {
    if path.exists() && !force {
        Err(ConfigError(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )))
    } else {
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    writeln!(file)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Sidecar of a chain file: `chain.csv` → `chain.json`.
pub fn sidecar_path(chain: &Path) -> PathBuf {
    chain.with_extension("json")
}

pub fn num(v: f64) -> String {
    v.to_string()
}
