//! Output files and their provenance headers.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

pub fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        None => Box::new(BufWriter::new(io::stdout().lock())),
        Some(p) if p == Path::new("-") => Box::new(BufWriter::new(io::stdout().lock())),
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
    })
}

/// `key=value` lines recording everything needed to regenerate an output.
/// Written with a `# ` prefix, they can be fed back through `--config`.
#[derive(Debug, Default)]
pub struct Provenance {
    lines: Vec<String>,
}

impl Provenance {
    pub fn new(command: &str) -> Self {
        let mut p = Self::default();
        p.set("command", command);
        p.set("version", env!("CARGO_PKG_VERSION"));
        p
    }

    pub fn set(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.lines.push(format!("{key}={value}"));
        self
    }

    /// A free-form line; never read back as config.
    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.lines.push(text.into());
        self
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn write(&self, w: &mut dyn Write) -> io::Result<()> {
        for l in &self.lines {
            writeln!(w, "# {l}")?;
        }
        Ok(())
    }
}
