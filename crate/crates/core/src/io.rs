//! CSV output with `#` metadata lines, written through a temporary file and
//! renamed into place so readers never see a partial file.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `contents` to `path` via a sibling temp file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::param("path", format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Renders a CSV table: `# key: value` lines, a header row, then rows.
/// Numbers use the shortest representation that round-trips.
pub fn render_csv(meta: &[(&str, String)], header: &[&str], rows: &[Vec<f64>]) -> Result<String> {
    let mut out = String::new();
    for (k, v) in meta {
        if v.contains('\n') {
            return Err(Error::param("metadata", format!("value for `{k}` spans lines")));
        }
        let _ = writeln!(out, "# {k}: {v}");
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::DimensionMismatch {
                expected: header.len(),
                got: row.len(),
            });
        }
        let cells: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_csv(path: &Path, meta: &[(&str, String)], header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    write_atomic(path, render_csv(meta, header, rows)?.as_bytes())
}

/// Data rows of a file written by [`write_csv`], skipping metadata and header.
pub fn read_csv_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            l.split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Structural(format!("bad cell `{c}`: {e}")))
                })
                .collect()
        })
        .collect()
}
