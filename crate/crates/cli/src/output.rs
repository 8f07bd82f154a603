use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Output directory whose files are written atomically and listed in the
/// manifest.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Writes `name` through a temporary file renamed into place.
    pub fn write<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        let target = self.dir.join(name);
        let tmp = tempfile::NamedTempFile::new_in(&self.dir)
            .with_context(|| format!("creating temporary file in {}", self.dir.display()))?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            fill(&mut w)?;
            w.flush()?;
        }
        tmp.persist(&target)
            .with_context(|| format!("writing {}", target.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish<C: Serialize>(mut self, manifest: Manifest<C>) -> Result<()> {
        let manifest = Manifest {
            outputs: std::mem::take(&mut self.written),
            ..manifest
        };
        self.write_json("manifest.json", &manifest)
    }
}

/// Everything needed to rerun a command.
#[derive(Serialize)]
pub struct Manifest<C> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub inputs: Vec<String>,
    pub seed: u64,
    pub config: C,
    pub records: usize,
    pub rejected: usize,
    pub outputs: Vec<String>,
}

impl<C> Manifest<C> {
    pub fn new(command: &str, inputs: Vec<String>, seed: u64, config: C) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            inputs,
            seed,
            config,
            records: 0,
            rejected: 0,
            outputs: Vec::new(),
        }
    }

    pub fn counts(mut self, records: usize, rejected: usize) -> Self {
        self.records = records;
        self.rejected = rejected;
        self
    }
}
