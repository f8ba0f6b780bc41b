//! Safetensors checkpoints with string metadata.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{Device, Tensor};
use safetensors::SafeTensors;

use super::model::{ModelConfig, MusicSlots};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: &str = "1";
pub const KEY_VERSION: &str = "format_version";
pub const KEY_KIND: &str = "model_kind";
pub const KEY_CONFIG: &str = "model_config";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: HashMap<String, String>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Result<&str> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::invalid(format!("checkpoint metadata lacks '{key}'")))
    }

    pub fn kind(&self) -> Result<&str> {
        self.meta(KEY_KIND)
    }
}

/// Writes to a sibling temporary file first so a crash never leaves a
/// truncated checkpoint behind.
pub fn save_checkpoint(path: &Path, tensors: &BTreeMap<String, Tensor>, mut metadata: HashMap<String, String>) -> Result<()> {
    metadata.insert(KEY_VERSION.into(), CHECKPOINT_VERSION.into());
    let bytes = safetensors::serialize(tensors.iter().map(|(k, v)| (k.as_str(), v)), Some(metadata))
        .map_err(|e| Error::invalid(format!("serializing checkpoint: {e}")))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("safetensors.tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |e: String| Error::corrupt(path, e);
    let (_, meta) = SafeTensors::read_metadata(&bytes).map_err(|e| corrupt(e.to_string()))?;
    let metadata = meta.metadata().clone().unwrap_or_default();
    match metadata.get(KEY_VERSION) {
        Some(v) if v == CHECKPOINT_VERSION => {}
        Some(v) => return Err(corrupt(format!("unsupported checkpoint version {v}"))),
        None => return Err(corrupt("missing format version".into())),
    }
    let tensors = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)
        .map_err(|e| corrupt(e.to_string()))?
        .into_iter()
        .collect();
    Ok(Checkpoint { tensors, metadata })
}

impl MusicSlots {
    pub const KIND: &'static str = "musicslots";

    pub fn metadata(&self) -> Result<HashMap<String, String>> {
        let mut m = HashMap::new();
        m.insert(KEY_KIND.into(), Self::KIND.into());
        m.insert(KEY_CONFIG.into(), serde_json::to_string(&self.config)?);
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.params.tensors(), self.metadata()?)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind()? != Self::KIND {
            return Err(Error::invalid(format!("checkpoint holds a '{}' model", ck.kind()?)));
        }
        let config: ModelConfig = serde_json::from_str(ck.meta(KEY_CONFIG)?)?;
        let dtype = ck
            .tensors
            .values()
            .next()
            .map(|t| t.dtype())
            .ok_or_else(|| Error::invalid("checkpoint holds no tensors"))?;
        let model = MusicSlots::new(config, dtype, 0)?;
        model.params.load(&ck.tensors)?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&load_checkpoint(path)?)
    }
}
