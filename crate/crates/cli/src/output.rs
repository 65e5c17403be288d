//! CSV and file helpers. Floats are written in shortest round-trip form.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use aging_core::analysis::WignerGrid;
use serde::Serialize;

use crate::error::CliError;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// Serializes `rows` under a header derived from the row type. An empty
/// table still gets `header`.
pub fn write_rows<R: Serialize>(dir: &Path, name: &str, header: &[&str], rows: &[R]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(&path)?);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// First row: `y\x` then the x axis; each further row: y then `W(x, y)`.
pub fn write_wigner(dir: &Path, name: &str, grid: &WignerGrid<f64>) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(&path)?);
    let mut header = vec!["y\\x".to_string()];
    header.extend(grid.x_axis.iter().map(f64::to_string));
    w.write_record(&header)?;
    for (iy, y) in grid.y_axis.iter().enumerate() {
        let mut row = vec![y.to_string()];
        row.extend((0..grid.x_axis.len()).map(|ix| grid.values[(iy, ix)].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut f = create(&path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
