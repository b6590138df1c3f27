//! CSV output: UTF-8, comma-separated, LF line endings, mandatory header.
//! Reals are written with 17 significant digits so they round-trip.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct CsvArtifact {
    path: PathBuf,
    writer: csv::Writer<File>,
    columns: usize,
}

impl CsvArtifact {
    pub fn create(dir: &Path, name: &str, header: &[String]) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&path)?;
        writer.write_record(header)?;
        Ok(Self { path, writer, columns: header.len() })
    }

    pub fn with_header(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let owned: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        Self::create(dir, name, &owned)
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        if fields.len() != self.columns {
            return Err(CliError::Invariant(format!(
                "{}: row has {} fields, header has {}",
                self.path.display(),
                fields.len(),
                self.columns
            )));
        }
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}
