//! CSV plumbing and per-run output directories.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `# key=value` lines ahead of a CSV body.
pub fn write_comments<W: Write>(w: &mut W, entries: &[(&str, String)]) -> Result<()> {
    for (k, v) in entries {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

pub fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

/// Creates `dir`, refusing to reuse an existing path unless `force` is set,
/// in which case its contents are removed first.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        if !force {
            return Err(Error::OutputExists(dir.display().to_string()));
        }
        if dir.is_dir() {
            fs::remove_dir_all(dir)?;
        } else {
            fs::remove_file(dir)?;
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}
