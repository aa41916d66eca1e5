//! Model checkpoints as JSON.
//!
//! Floats are written with round-trip precision, so a saved and reloaded
//! model is bit-identical to the original.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pathqa_core::autograd::Tensor;
use pathqa_core::scorer::{Model, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "pathqa-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    /// Seed of the random vectors given to words without a pretrained one.
    pub embedding_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings_path: Option<PathBuf>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, embedding_seed: u64, embeddings_path: Option<PathBuf>) -> Self {
        let params = model
            .store
            .iter()
            .map(|(_, name, t)| ParamRecord {
                name: name.to_string(),
                shape: t.shape(),
                values: t.data().to_vec(),
            })
            .collect();
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            model: model.config,
            embedding_seed,
            embeddings_path,
            metadata: BTreeMap::new(),
            params,
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        let mut model = Model::new(self.model, 0)?;
        let entries = self
            .params
            .iter()
            .map(|p| Ok((p.name.clone(), Tensor::from_vec(p.shape[0], p.shape[1], p.values.clone())?)))
            .collect::<Result<Vec<_>>>()?;
        model.set_params(entries)?;
        Ok(model)
    }

    /// Writes to a sibling temporary file, then renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let ckpt: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            message: format!("at `{}`: {}", e.path(), e.inner()),
        })?;
        if ckpt.format != FORMAT || ckpt.version != VERSION {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                message: format!("unsupported format `{}` version {}", ckpt.format, ckpt.version),
            });
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pathqa_core::scorer::Composition;

    fn model() -> Model {
        let config = ModelConfig {
            embedding_dim: 5,
            hidden_per_direction: 3,
            composition: Composition::Gru,
            ..ModelConfig::default()
        };
        Model::new(config, 11).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = model();
        let mut c = Checkpoint::from_model(&m, 4, None);
        c.metadata.insert("epoch".into(), 3.into());
        c.save(&path).unwrap();
        assert!(!dir.path().join("m.json.tmp").exists());
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, c);
        let m2 = back.to_model().unwrap();
        for ((_, _, a), (_, _, b)) in m.store.iter().zip(m2.store.iter()) {
            let a: Vec<u64> = a.data().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = b.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rejects_foreign_and_incomplete_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut c = Checkpoint::from_model(&model(), 4, None);
        c.format = "other".into();
        c.save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint { .. })));

        let mut c = Checkpoint::from_model(&model(), 4, None);
        c.params.pop();
        c.save(&path).unwrap();
        assert!(Checkpoint::load(&path).unwrap().to_model().is_err());

        std::fs::write(&path, r#"{"format": 1}"#).unwrap();
        match Checkpoint::load(&path).unwrap_err() {
            Error::Checkpoint { message, .. } => assert!(message.contains("format"), "{message}"),
            e => panic!("{e}"),
        }
    }
}
