//! Single-file JSON checkpoints.
//!
//! Parameters and batchnorm buffers are stored as base64 of their
//! little-endian `f64` bytes, in the order given by `layers` and `buffers`.
//! `sha256` covers the parameter bytes followed by the buffer bytes.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{init_model, FairModel, ModelConfig};
use crate::dataset::StandardizationParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub model_config: ModelConfig,
    pub seed: u64,
    pub district_labels: Vec<String>,
    pub standardization: StandardizationParams,
    pub parameter_count: usize,
    pub layers: Vec<TensorEntry>,
    pub buffers: Vec<TensorEntry>,
    pub parameters: String,
    pub buffer_values: String,
    pub sha256: String,
    /// Ids of the rows the model was trained on.
    pub train_ids: Vec<String>,
    /// Free-form training metadata (config, config hash, ...).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

fn to_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn from_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Integrity(format!("{} bytes is not a whole number of f64", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn digest(params: &[u8], buffers: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(params);
    h.update(buffers);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn from_model(model: &FairModel, train_ids: Vec<String>, metadata: serde_json::Value) -> Result<Self> {
        let standardization = model
            .standardization
            .clone()
            .ok_or_else(|| Error::invalid("cannot checkpoint a model without standardization"))?;
        let p = to_bytes(&model.flat_params());
        let b = to_bytes(&model.flat_buffers());
        Ok(Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            model_config: model.config().clone(),
            seed: model.seed(),
            district_labels: model.district_labels.clone(),
            standardization,
            parameter_count: model.parameter_count(),
            layers: model
                .named_params()
                .into_iter()
                .map(|(name, p)| TensorEntry { name, len: p.len() })
                .collect(),
            buffers: model
                .buffer_names()
                .into_iter()
                .map(|(name, len)| TensorEntry { name, len })
                .collect(),
            sha256: digest(&p, &b),
            parameters: B64.encode(&p),
            buffer_values: B64.encode(&b),
            train_ids,
            metadata,
        })
    }

    /// Rebuilds the model, verifying version, hash and layer layout.
    pub fn to_model(&self) -> Result<FairModel> {
        if self.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Integrity(format!(
                "unsupported checkpoint schema version {}",
                self.schema_version
            )));
        }
        let decode = |s: &str| {
            B64.decode(s)
                .map_err(|e| Error::Integrity(format!("bad base64 payload: {e}")))
        };
        let p = decode(&self.parameters)?;
        let b = decode(&self.buffer_values)?;
        let got = digest(&p, &b);
        if got != self.sha256 {
            return Err(Error::Integrity(format!("sha256 {got} does not match recorded {}", self.sha256)));
        }
        let mut model = init_model(&self.model_config, self.seed)?;
        let layout: Vec<TensorEntry> = model
            .named_params()
            .into_iter()
            .map(|(name, p)| TensorEntry { name, len: p.len() })
            .collect();
        if layout != self.layers || model.parameter_count() != self.parameter_count {
            return Err(Error::Integrity("layer layout does not match the model config".into()));
        }
        model.set_flat_params(&from_bytes(&p)?)?;
        model.set_flat_buffers(&from_bytes(&b)?)?;
        model.standardization = Some(self.standardization.clone());
        model.district_labels = self.district_labels.clone();
        Ok(model)
    }
}

pub fn save_checkpoint(
    model: &FairModel,
    train_ids: Vec<String>,
    metadata: serde_json::Value,
    path: impl AsRef<Path>,
) -> Result<Checkpoint> {
    let path = path.as_ref();
    let ckpt = Checkpoint::from_model(model, train_ids, metadata)?;
    let text = serde_json::to_string_pretty(&ckpt)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(ckpt)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(FairModel, Checkpoint)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    Ok((ckpt.to_model()?, ckpt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use crate::nn::Matrix;

    fn model() -> FairModel {
        let mut m = init_model(&ModelConfig::new(3, Variant::Fair), 11).unwrap();
        m.standardization = Some(StandardizationParams::fit(&Matrix::identity(11)).unwrap());
        m.district_labels = vec!["A".into(), "B".into(), "C".into()];
        // awkward values survive
        let mut p = m.flat_params();
        p[0] = f64::MIN_POSITIVE / 3.0;
        p[1] = -0.0;
        m.set_flat_params(&p).unwrap();
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&m, vec!["u1".into()], serde_json::json!({"k": 1}), &path).unwrap();
        let (back, ckpt) = load_checkpoint(&path).unwrap();
        let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(back.flat_params()), bits(m.flat_params()));
        assert_eq!(bits(back.flat_buffers()), bits(m.flat_buffers()));
        assert_eq!(back.standardization, m.standardization);
        assert_eq!(back.district_labels, m.district_labels);
        assert_eq!(ckpt.train_ids, vec!["u1".to_string()]);
    }

    #[test]
    fn tampering_is_detected() {
        let m = model();
        let mut c = Checkpoint::from_model(&m, vec![], serde_json::Value::Null).unwrap();
        let mut bytes = B64.decode(&c.parameters).unwrap();
        bytes[17] ^= 1;
        c.parameters = B64.encode(&bytes);
        assert!(matches!(c.to_model(), Err(Error::Integrity(_))));

        let mut c = Checkpoint::from_model(&m, vec![], serde_json::Value::Null).unwrap();
        c.schema_version = 99;
        assert!(matches!(c.to_model(), Err(Error::Integrity(_))));
    }
}
