//! JSON model files: `{version, descriptor, layers: [{W, bias?, activations}]}`.
//!
//! Numbers are written with the shortest representation that parses back to the
//! same `f64`, so a save/load cycle is bit-exact.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{DenseLayer, Network};
use crate::error::{Error, Result};

pub const MODEL_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u64,
    descriptor: Vec<usize>,
    layers: Vec<DenseLayer>,
}

impl Network {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            version: MODEL_VERSION,
            descriptor: self.descriptor(),
            layers: self.layers.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Network> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let version = value
            .get("version")
            .ok_or_else(|| Error::Parse("missing field `version`".into()))?
            .as_u64()
            .ok_or_else(|| Error::Parse("`version` must be a nonnegative integer".into()))?;
        if version != MODEL_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: MODEL_VERSION,
            });
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
        for layer in &file.layers {
            layer.validate()?;
        }
        let net = Network::new(file.layers)?;
        if net.descriptor() != file.descriptor {
            return Err(Error::Parse(format!(
                "descriptor {:?} does not match layer shapes {:?}",
                file.descriptor,
                net.descriptor()
            )));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Network> {
        Network::from_json(&std::fs::read_to_string(path)?)
    }
}
