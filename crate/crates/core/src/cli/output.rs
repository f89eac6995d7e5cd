//! Atomic artifact writing and CSV formatting.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cli::CliError;

/// Files written into one output directory during a command.
///
/// Each file is written to a temporary sibling and renamed into place, so a
/// reader never sees a half-written artifact. [`Artifacts::discard`] removes
/// everything written so far.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

fn out_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| out_err(dir, e))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| out_err(&path, e))?;
        tmp.write_all(bytes).map_err(|e| out_err(&path, e))?;
        tmp.as_file().sync_all().map_err(|e| out_err(&path, e))?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(tmp.path(), std::fs::Permissions::from_mode(0o644))
                .map_err(|e| out_err(&path, e))?;
        }
        tmp.persist(&path).map_err(|e| out_err(&path, e.error))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut s =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, table: &CsvTable) -> Result<PathBuf, CliError> {
        let bytes = table.to_bytes()?;
        self.write(name, &bytes)
    }

    /// Removes every artifact written so far.
    pub fn discard(&mut self) {
        for p in self.written.drain(..) {
            if let Err(e) = std::fs::remove_file(&p) {
                log::warn!("could not remove {}: {e}", p.display());
            }
        }
    }
}

/// Shortest decimal form that parses back to the same `f64`; empty for NaN.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

/// Header plus string rows, serialised with RFC 4180 quoting.
#[derive(Clone, Debug, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        CsvTable {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Output(e.to_string());
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.into_inner().map_err(|e| CliError::Output(e.to_string()))
    }
}
