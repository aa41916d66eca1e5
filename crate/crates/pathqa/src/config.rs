//! Run configuration: one TOML or JSON file, overridable from the command line.

use std::path::{Path, PathBuf};

use pathqa_core::paths::ExtractionConfig;
use pathqa_core::scorer::ModelConfig;
use pathqa_core::train::OptimConfig;
use serde::{Deserialize, Serialize};

use crate::dataset::Format;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub extraction: ExtractionConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without a dev improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub format: Format,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    /// Sentence corpus for open-domain records without supports.
    pub corpus: Option<PathBuf>,
    /// Keep only general-statement sentences of the corpus.
    pub general_only: bool,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            optim: OptimConfig::default(),
            extraction: ExtractionConfig::default(),
            batch_size: 8,
            epochs: 30,
            patience: 5,
            seed: 0,
            format: Format::Wikihop,
            train: None,
            dev: None,
            corpus: None,
            general_only: true,
            embeddings: None,
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    /// Reads `.toml` files as TOML and anything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|source| Error::Toml {
                path: path.to_path_buf(),
                source,
            })?
        } else {
            serde_json::from_str(&text).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })?
        };
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.extraction.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be positive".into()));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.optim.learning_rate) || !positive(self.optim.clip_norm) {
            return Err(Error::Config("learning_rate and clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pathqa_core::scorer::{Composition, ScoreMode};

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!(c.batch_size, 8);
        assert_eq!(c.optim.learning_rate, 0.001);
        assert_eq!(c.optim.clip_norm, 5.0);
        assert_eq!(c.model.dropout, 0.25);
        assert_eq!(c.model.hidden(), 100);
        assert_eq!(c.model.embedding_dim, 300);
        c.validate().unwrap();
    }

    #[test]
    fn toml_and_json_files() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        std::fs::write(
            &t,
            "epochs = 3\nseed = 9\n[model]\ncomposition = \"gru\"\nmode = \"psg_only\"\n[optim]\nlearning_rate = 0.01\n",
        )
        .unwrap();
        let c = TrainConfig::load(&t).unwrap();
        assert_eq!((c.epochs, c.seed), (3, 9));
        assert_eq!(c.model.composition, Composition::Gru);
        assert_eq!(c.model.mode, ScoreMode::PsgOnly);
        assert_eq!(c.optim.clip_norm, 5.0);

        let j = dir.path().join("c.json");
        std::fs::write(&j, r#"{"batch_size": 4, "format": "openbookqa"}"#).unwrap();
        let c = TrainConfig::load(&j).unwrap();
        assert_eq!(c.batch_size, 4);
        assert_eq!(c.format, Format::Openbookqa);

        std::fs::write(&j, r#"{"batch_sise": 4}"#).unwrap();
        assert!(matches!(TrainConfig::load(&j), Err(Error::Json { .. })));
        std::fs::write(&t, "[model]\nhidden_per_direction = \"x\"\n").unwrap();
        assert!(matches!(TrainConfig::load(&t), Err(Error::Toml { .. })));
    }

    #[test]
    fn validation() {
        let mut c = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        c.batch_size = 1;
        c.optim.learning_rate = -1.0;
        assert!(c.validate().is_err());
        c.optim.learning_rate = 0.1;
        c.model.hidden_per_direction = 0;
        assert!(c.validate().is_err());
    }
}
