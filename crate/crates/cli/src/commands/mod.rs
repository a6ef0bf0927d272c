pub mod ensemble;
pub mod eval;
pub mod export;
pub mod gen;
pub mod reproduce;
pub mod sweep;
pub mod train;

use mwr_core::error::{Error, Result};
use std::path::Path;

/// Load a JSON config file into any deserializable config type.
pub fn load_config_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

/// Parse a comma-separated seed list such as `1,2,3`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let seeds: std::result::Result<Vec<u64>, _> =
        text.split(',').map(|s| s.trim().parse::<u64>()).collect();
    let seeds = seeds.map_err(|_| Error::invalid(format!("invalid --seeds list `{text}`")))?;
    if seeds.is_empty() {
        return Err(Error::invalid("--seeds must not be empty"));
    }
    Ok(seeds)
}
