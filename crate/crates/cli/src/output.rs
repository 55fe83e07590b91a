//! Atomic artifact writing: every file is written to a temporary sibling
//! and renamed into place.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliError;

pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }

    /// Runs `fill` on a buffered temporary file and renames it to `name`.
    pub fn write_with<F>(&mut self, name: &str, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
    {
        let target = self.dir.join(name);
        let io_err = |e: std::io::Error| CliError::io(format!("writing {}: {e}", target.display()));
        let tmp = NamedTempFile::new_in(&self.dir).map_err(io_err)?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            fill(&mut w)?;
            w.flush().map_err(io_err)?;
        }
        tmp.as_file().sync_all().map_err(io_err)?;
        tmp.persist(&target).map_err(|e| io_err(e.error))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(CliError::serialize)?;
            writeln!(w).map_err(CliError::from)
        })
    }

    /// One JSON document per line.
    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, records: &[T]) -> Result<(), CliError> {
        self.write_with(name, |w| {
            for r in records {
                serde_json::to_writer(&mut *w, r).map_err(CliError::serialize)?;
                writeln!(w)?;
            }
            Ok(())
        })
    }

    /// CSV with a header derived from the record fields.
    pub fn write_csv_records<T: Serialize>(&mut self, name: &str, records: &[T]) -> Result<(), CliError> {
        self.write_with(name, |w| {
            let mut out = csv::Writer::from_writer(w);
            for r in records {
                out.serialize(r).map_err(CliError::serialize)?;
            }
            out.flush()?;
            Ok(())
        })
    }
}
