//! Room and constant configuration loading.

use std::path::Path;

use puffer_core::{Constants, Directory, RoomSeed};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid room config: {0}")]
    Rooms(#[from] serde_json::Error),
    #[error("invalid constants: {0}")]
    Constants(#[from] toml::de::Error),
}

pub fn load_rooms(path: &Path) -> Result<Vec<RoomSeed>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    Ok(Directory::from_json(&text)?)
}

/// Applies constant overrides given either as a TOML file path or inline as
/// comma-separated `key=value` pairs.
pub fn parse_constants(spec: &str) -> Result<Constants, ConfigError> {
    let text = if Path::new(spec).is_file() {
        std::fs::read_to_string(spec).map_err(|source| ConfigError::Read {
            path: spec.to_owned(),
            source,
        })?
    } else {
        spec.split(',')
            .map(str::trim)
            .collect::<Vec<_>>()
            .join("\n")
    };
    Ok(toml::from_str(&text)?)
}

/// A single room for running without a config file.
pub fn default_rooms() -> Vec<RoomSeed> {
    vec![RoomSeed {
        room_id: puffer_core::RoomId("lobby".into()),
        name: "Lobby".into(),
        theme_tags: vec!["social".into()],
        capacity: 32,
    }]
}
