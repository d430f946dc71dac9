//! Versioned JSON model files for fitted encoders.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncoderParams, FittedEncoder, Method, UnseenPolicy};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    method: Method,
    unseen_policy: UnseenPolicy,
    level_names: Vec<String>,
    column_labels: Vec<String>,
    fallback: Vec<f64>,
    params: EncoderParams,
}

impl FittedEncoder {
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            method: self.method,
            unseen_policy: self.unseen_policy,
            level_names: self.level_names.clone(),
            column_labels: self.column_labels.clone(),
            fallback: self.fallback.clone(),
            params: self.params.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(MODEL_FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::Model(format!(
                    "unsupported format_version {v} (expected {MODEL_FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Model("missing format_version".to_string())),
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| Error::Model(e.to_string()))?;
        let enc = FittedEncoder::build(
            file.method,
            file.params,
            file.level_names,
            file.column_labels,
            file.fallback,
        )?;
        Ok(enc.with_unseen_policy(file.unseen_policy))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
