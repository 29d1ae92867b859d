//! Output files. CSV headers are fixed, numbers carry 17 significant
//! digits, and lines end in `\n`.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

pub const ZMAP_FILE: &str = "zmap.csv";
pub const SCALARS_FILE: &str = "scalars.csv";
pub const META_FILE: &str = "meta.json";
pub const FRAGMENT_FILE: &str = "fragment.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// `t,site,z` rows, time-major.
pub fn write_zmap(path: &Path, times: &[f64], z: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["t", "site", "z"]).map_err(|e| csv_err(path, e))?;
    for (t, row) in times.iter().zip(z) {
        let t = fmt_f64(*t);
        for (i, zi) in row.iter().enumerate() {
            w.write_record([t.as_str(), &(i + 1).to_string(), &fmt_f64(*zi)]).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// One scalar observable with its per-time standard error.
pub struct ScalarColumn<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
    pub stderr: &'a [f64],
}

/// `t,name,value,stderr` rows, time-major, observables in the given order.
pub fn write_scalars(path: &Path, times: &[f64], columns: &[ScalarColumn<'_>]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["t", "name", "value", "stderr"]).map_err(|e| csv_err(path, e))?;
    for (k, t) in times.iter().enumerate() {
        let t = fmt_f64(*t);
        for c in columns {
            w.write_record([t.as_str(), c.name, &fmt_f64(c.values[k]), &fmt_f64(c.stderr[k])])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
