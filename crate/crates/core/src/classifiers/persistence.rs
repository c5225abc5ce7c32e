//! Versioned JSON model files. Floats round-trip exactly, so a reloaded model
//! reproduces its predictions bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, TrainedModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: TrainedModel,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

pub fn to_json(model: &TrainedModel) -> Result<String, ClassifierError> {
    Ok(serde_json::to_string_pretty(&ModelFile {
        format_version: FORMAT_VERSION,
        model: model.clone(),
    })?)
}

pub fn from_json(text: &str) -> Result<TrainedModel, ClassifierError> {
    let probe: VersionProbe = serde_json::from_str(text)?;
    if probe.format_version != FORMAT_VERSION {
        return Err(ClassifierError::UnsupportedVersion(probe.format_version));
    }
    let file: ModelFile = serde_json::from_str(text)?;
    Ok(file.model)
}

pub fn save(model: &TrainedModel, path: &Path) -> Result<(), ClassifierError> {
    let text = to_json(model)?;
    fs::write(path, text).map_err(|source| ClassifierError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(path: &Path) -> Result<TrainedModel, ClassifierError> {
    let text = fs::read_to_string(path).map_err(|source| ClassifierError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_json(&text)
}
