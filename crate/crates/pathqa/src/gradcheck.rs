//! Finite-difference check of the full training loss on a small fixed
//! instance: two candidates reached by three paths, one of them single-passage.

use pathqa_core::autograd::{finite_diff_check, GradCheckReport};
use pathqa_core::embedding::EmbeddingTable;
use pathqa_core::instance::QuestionInstance;
use pathqa_core::paths::ExtractionConfig;
use pathqa_core::rng::Rng;
use pathqa_core::scorer::{forward_instance, instance_loss, Composition, Model, ModelConfig, Normalization};
use pathqa_core::text::Passage;
use pathqa_core::train::Prepared;
use serde::{Deserialize, Serialize};

use crate::dataset::vocabulary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub composition: Composition,
    pub normalization: Normalization,
    pub hidden_per_direction: usize,
    pub embedding_dim: usize,
    pub eps: f64,
    /// Coordinates sampled per parameter; `usize::MAX` checks all of them.
    pub max_coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            composition: Composition::Ffl,
            normalization: Normalization::Joint,
            hidden_per_direction: 4,
            embedding_dim: 10,
            eps: 1e-5,
            max_coords_per_param: usize::MAX,
            seed: 0,
        }
    }
}

pub fn fixture() -> Prepared {
    let passages = vec![
        Passage::new(0, "Alma Rook lives in Dunmore."),
        Passage::new(1, "Dunmore lies within Vessia."),
        Passage::new(2, "Alma Rook once visited Quell."),
        Passage::new(3, "Dunmore borders Quell to the east."),
    ];
    let inst = QuestionInstance::new(
        "grad-check",
        "country alma rook",
        vec!["Alma Rook".into()],
        &["Vessia".into(), "Quell".into()],
        passages,
        Some(0),
    )
    .expect("fixture is valid");
    Prepared::new(inst, &ExtractionConfig::default())
}

/// Checks every parameter of a freshly initialised model, dropout off.
pub fn run(config: &GradCheckConfig) -> Result<GradCheckReport> {
    let data = fixture();
    let model_config = ModelConfig {
        embedding_dim: config.embedding_dim,
        hidden_per_direction: config.hidden_per_direction,
        composition: config.composition,
        normalization: config.normalization,
        ..ModelConfig::default()
    };
    let model = Model::new(model_config, config.seed)?;
    let table = EmbeddingTable::random(config.embedding_dim, vocabulary([&data.instance]), config.seed);
    let answer = data.instance.answer_index.expect("fixture has an answer");
    let mut store = model.store.clone();
    let mut scratch = model.clone();
    let report = finite_diff_check(
        &mut store,
        |g, st| {
            scratch.store.clone_from(st);
            let vars = forward_instance(g, &scratch, &table, &data.instance, &data.paths, None)?;
            instance_loss(g, &vars, &data.paths, answer, model_config.normalization)?
                .ok_or(pathqa_core::Error::NothingToTrain)
        },
        config.eps,
        config.max_coords_per_param,
        &mut Rng::derived(config.seed, "grad-check"),
    )?;
    if report.coordinates_checked == 0 {
        return Err(Error::Config("no coordinates checked".into()));
    }
    Ok(report)
}
