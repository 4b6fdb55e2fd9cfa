//! Self-describing JSON model bundle.
//!
//! Floats are written in shortest round-trip decimal form, so loading
//! reproduces every parameter bit-for-bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainedSystem;
use crate::data::Schema;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "dafh-model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub magic: String,
    pub format_version: u32,
    pub k: usize,
    pub d: usize,
    pub schema_fingerprint: String,
    /// Feature layout and the preprocessing statistics fitted on the
    /// training data; apply with [`crate::data::apply_standardization`].
    pub schema: Schema,
    /// Method that produced the system (`dafh`, `trivial`, ...).
    pub method: String,
    pub system: TrainedSystem,
}

impl ModelBundle {
    pub fn new(system: TrainedSystem, schema: &Schema, method: &str) -> Result<Self> {
        system.validate()?;
        if schema.dim() != system.dim() {
            return Err(Error::DimensionMismatch {
                expected: system.dim(),
                got: schema.dim(),
            });
        }
        Ok(Self {
            magic: MAGIC.to_string(),
            format_version: FORMAT_VERSION,
            k: system.k(),
            d: system.dim(),
            schema_fingerprint: schema.fingerprint(),
            schema: schema.clone(),
            method: method.to_string(),
            system,
        })
    }

    /// Rejects data whose feature layout differs from the training data.
    pub fn check_schema(&self, schema: &Schema) -> Result<()> {
        let fp = schema.fingerprint();
        if fp != self.schema_fingerprint {
            return Err(Error::FingerprintMismatch {
                model: self.schema_fingerprint.clone(),
                data: fp,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::CorruptModel(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
        if value.get("magic").and_then(|m| m.as_str()) != Some(MAGIC) {
            return Err(Error::CorruptModel("missing bundle header".into()));
        }
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::CorruptModel("missing format_version".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::VersionMismatch {
                found: version as u32,
                expected: FORMAT_VERSION,
            });
        }
        let bundle: ModelBundle =
            serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;
        bundle.system.validate().map_err(|e| Error::CorruptModel(e.to_string()))?;
        if bundle.k != bundle.system.k() || bundle.d != bundle.system.dim() || bundle.schema.dim() != bundle.d {
            return Err(Error::CorruptModel("header shape disagrees with parameters".into()));
        }
        Ok(bundle)
    }
}

pub fn save_system(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, bundle.to_json()?)?;
    Ok(())
}

pub fn load_system(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    ModelBundle::from_json(&fs::read_to_string(path)?)
}
