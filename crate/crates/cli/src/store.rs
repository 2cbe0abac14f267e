//! Frame store: `<root>/frames/<name>.csv`, root from `ANOML_DATA_DIR` or
//! `./anoml-data`.

use std::path::{Path, PathBuf};

use anoml_core::dataset::{load_csv, CsvSchema, TimeSeriesFrame};

use crate::error::{validation, CliResult};

pub const DATA_DIR_ENV: &str = "ANOML_DATA_DIR";

pub fn root() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("anoml-data"), PathBuf::from)
}

pub fn frame_path(name: &str) -> CliResult<PathBuf> {
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        || name.starts_with('.')
    {
        return Err(validation(format!("invalid frame name {name:?}")));
    }
    Ok(root().join("frames").join(format!("{name}.csv")))
}

/// An existing file path, else a frame-store name. Stored frames always use
/// the default schema.
pub fn load_input(input: &str, schema: &CsvSchema) -> CliResult<TimeSeriesFrame> {
    let path = Path::new(input);
    if path.is_file() {
        return Ok(load_csv(path, schema)?);
    }
    let stored = frame_path(input)
        .map_err(|_| validation(format!("no such file or stored frame: {input}")))?;
    if stored.is_file() {
        return Ok(load_csv(&stored, &CsvSchema::default())?);
    }
    Err(validation(format!("no such file or stored frame: {input}")))
}
