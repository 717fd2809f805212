//! Versioned JSON checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AlternatorParams;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub params: AlternatorParams,
}

impl Checkpoint {
    pub fn new(params: AlternatorParams) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        match probe.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::Input(format!(
                    "checkpoint format_version {v} is not supported (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Input("checkpoint lacks format_version".into())),
        }
        let ck: Self = serde_json::from_value(probe)?;
        ck.params.validate()?;
        Ok(ck)
    }
}

pub fn save_checkpoint(params: &AlternatorParams, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, Checkpoint::new(params.clone()).to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<AlternatorParams> {
    Ok(Checkpoint::from_json(&std::fs::read_to_string(path)?)?.params)
}
