//! JSON files for models, profiles and extraction tables.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use mugeetion_core::emotion::{ModelError, TableError};
use mugeetion_core::mapping::ProfileError;
use mugeetion_core::{AuExtractionTable, EmotionModel, MappingProfile};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: at {field}: {message}")]
    Parse {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{path}: invalid model: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
    #[error("{path}: invalid profile: {source}")]
    Profile {
        path: PathBuf,
        #[source]
        source: ProfileError,
    },
    #[error("{path}: invalid extraction table: {source}")]
    Table {
        path: PathBuf,
        #[source]
        source: TableError,
    },
}

/// Parses JSON text, reporting the failing field path.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, (String, String)> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        (field, e.into_inner().to_string())
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let text = fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.into(),
        source,
    })?;
    parse_json(&text).map_err(|(field, message)| FileError::Parse {
        path: path.into(),
        field,
        message,
    })
}

/// Pretty JSON with a trailing newline. Field order is fixed by the types
/// and maps are ordered, so equal values give equal bytes.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("model types serialize infallibly");
    out.push(b'\n');
    out
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FileError> {
    fs::write(path, to_json_bytes(value)).map_err(|source| FileError::Io {
        path: path.into(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<EmotionModel, FileError> {
    let m: EmotionModel = read_json(path)?;
    m.validate().map_err(|source| FileError::Model {
        path: path.into(),
        source,
    })?;
    Ok(m)
}

pub fn save_model(path: &Path, model: &EmotionModel) -> Result<(), FileError> {
    write_json(path, model)
}

pub fn load_profile(path: &Path) -> Result<MappingProfile, FileError> {
    let p: MappingProfile = read_json(path)?;
    p.validate().map_err(|source| FileError::Profile {
        path: path.into(),
        source,
    })?;
    Ok(p)
}

pub fn save_profile(path: &Path, profile: &MappingProfile) -> Result<(), FileError> {
    write_json(path, profile)
}

pub fn load_table(path: &Path) -> Result<AuExtractionTable, FileError> {
    let t: AuExtractionTable = read_json(path)?;
    t.validate().map_err(|source| FileError::Table {
        path: path.into(),
        source,
    })?;
    Ok(t)
}
