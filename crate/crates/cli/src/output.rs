//! Guarded persistence: every command writes through an [`OutputDir`] that
//! creates the directory on demand and refuses to overwrite existing files
//! unless `--force` was given. JSON documents are pretty-printed; matrices go
//! to CSV with full (17 significant digit) precision.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use oamlab::{Error, Result};
use serde::Serialize;

/// Output directory with overwrite protection.
pub struct OutputDir {
    root: PathBuf,
    force: bool,
}

impl OutputDir {
    pub fn new(root: &Path, force: bool) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("cannot create output directory {}: {e}", root.display()),
            ))
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            force,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Create a file for writing, honoring the overwrite guard.
    pub fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.path(name);
        if path.exists() && !self.force {
            return Err(Error::Config(format!(
                "output file {} already exists; pass --force to overwrite",
                path.display()
            )));
        }
        let file = File::create(&path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("cannot write {}: {e}", path.display()),
            ))
        })?;
        Ok(BufWriter::new(file))
    }

    /// Serialize a document as pretty JSON.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut out = self.create(name)?;
        serde_json::to_writer_pretty(&mut out, value)
            .map_err(|e| Error::Format(format!("cannot serialize {name}: {e}")))?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(self.path(name))
    }

    /// Write a real matrix as CSV with `l`-labeled rows and columns: the
    /// header row carries the column labels, each data row starts with its
    /// own label.
    pub fn write_labeled_csv(
        &self,
        name: &str,
        matrix: &Array2<f64>,
        row_labels: &[i32],
        col_labels: &[i32],
    ) -> Result<PathBuf> {
        let mut out = self.create(name)?;
        write!(out, "l_s\\l_i")?;
        for l in col_labels {
            write!(out, ",{l}")?;
        }
        writeln!(out)?;
        for (r, l) in row_labels.iter().enumerate() {
            write!(out, "{l}")?;
            for c in 0..col_labels.len() {
                write!(out, ",{:.17e}", matrix[(r, c)])?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(self.path(name))
    }
}
