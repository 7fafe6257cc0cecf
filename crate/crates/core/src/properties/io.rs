use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Property, PropertySet};
use crate::{Error, Result};

const VERSION: u32 = 1;

/// On-disk property list: `{"version": 1, "properties": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyFile {
    pub version: u32,
    pub properties: Vec<Property>,
}

impl PropertySet {
    pub fn to_json(&self) -> Result<String> {
        let file = PropertyFile { version: VERSION, properties: self.props.clone() };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PropertyFile = serde_json::from_str(text)?;
        if file.version != VERSION {
            return Err(Error::Format(format!("unsupported property file version {}", file.version)));
        }
        Ok(Self::new(file.properties))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
