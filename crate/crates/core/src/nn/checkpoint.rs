use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerSpec, OptimizerState, ParamStore};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "tapnet-checkpoint";
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Self-describing JSON container for a trained graph.
///
/// `config` is the model configuration that rebuilds the graph; `layers`
/// lists each branch's layer specs for readers that do not know the config
/// schema. Serialization is deterministic: equal contents give equal bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub schema_version: u32,
    pub config: serde_json::Value,
    pub layers: Vec<(String, Vec<LayerSpec>)>,
    pub params: ParamStore,
    pub optimizer: Option<OptimizerState>,
    pub seed: u64,
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    schema_version: Option<u32>,
}

impl Checkpoint {
    pub fn new(
        config: serde_json::Value,
        layers: Vec<(String, Vec<LayerSpec>)>,
        params: ParamStore,
        optimizer: Option<OptimizerState>,
        seed: u64,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            config,
            layers,
            params,
            optimizer,
            seed,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header: Header = serde_json::from_slice(bytes)?;
        let format = header.format.unwrap_or_default();
        if format != CHECKPOINT_FORMAT {
            return Err(Error::Schema {
                expected: CHECKPOINT_FORMAT.into(),
                found: format,
            });
        }
        let version = header.schema_version.unwrap_or(0);
        if version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Schema {
                expected: format!("schema version {CHECKPOINT_SCHEMA_VERSION}"),
                found: format!("schema version {version}"),
            });
        }
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_bytes()?)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
