//! Versioned JSON records written by the command-line tool.
//!
//! Every record carries the schema version, the tool version, the seed and
//! the resolved configuration that produced it. No timestamps are stored,
//! so re-running a configuration reproduces the file byte for byte.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub schema: u32,
    pub tool: String,
    pub version: String,
    /// Subcommand or operation name.
    pub kind: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub body: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(kind: &str, seed: Option<u64>, config: &impl Serialize, body: T) -> Result<Self> {
        Ok(Self {
            schema: SCHEMA_VERSION,
            tool: "xattr".into(),
            version: TOOL_VERSION.into(),
            kind: kind.into(),
            seed,
            config: serde_json::to_value(config)?,
            body,
        })
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

impl<T: DeserializeOwned> Report<T> {
    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.schema != SCHEMA_VERSION {
            return Err(Error::Unsupported(format!("report schema {} (expected {SCHEMA_VERSION})", r.schema)));
        }
        Ok(r)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
