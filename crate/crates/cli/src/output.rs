use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gmdisco::{Error, Result};
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writes files into one output directory; every CSV starts with a comment
/// line carrying the tool version and configuration hash.
pub struct OutputDir {
    dir: PathBuf,
    comment: String,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path, config_hash: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("cannot create output directory {}: {e}", dir.display()),
            ))
        })?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            comment: format!("# gmdisco {VERSION} config_sha256={config_hash}\n"),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("cannot write {}: {e}", path.display()),
            ))
        })?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut buf = self.comment.clone().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header).map_err(csv_err)?;
            for row in rows {
                w.write_record(row).map_err(csv_err)?;
            }
            w.flush()?;
        }
        self.write_bytes(name, &buf)
    }

    /// A CSV whose body is produced by `body` (which writes its own header).
    pub fn csv_with<F>(&mut self, name: &str, body: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = self.comment.clone().into_bytes();
        body(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Config(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let mut buf = Vec::with_capacity(text.len() + 1);
        buf.write_all(text.as_bytes())?;
        if !text.ends_with('\n') {
            buf.push(b'\n');
        }
        self.write_bytes(name, &buf)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Shortest round-trip formatting, switching to exponent form for very
/// small or large magnitudes; NaN becomes an empty cell.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v == v.trunc() && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:?}")
    }
}
