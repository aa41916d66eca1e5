//! Glue shared by the command line and the test suites: loading data with an
//! optional retrieval corpus, building the embedding table, and training a
//! checkpointed model end to end.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use pathqa_core::embedding::EmbeddingTable;
use pathqa_core::instance::QuestionInstance;
use pathqa_core::paths::ExtractionConfig;
use pathqa_core::retrieval::{IdfIndex, RetrievalConfig};
use pathqa_core::train::Prepared;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::corpus::read_corpus;
use crate::dataset::{entity_query_instance, load_dataset, vocabulary, Corpus, EntityQueryRecord, Format};
use crate::embeddings::load_table;
use crate::error::{Error, Result};
use crate::evaluate::prepare_all;
use crate::trainer::{train, TrainOutcome};

/// A loaded sentence corpus with its index.
pub struct CorpusIndex {
    pub sentences: Vec<String>,
    pub index: IdfIndex,
}

impl CorpusIndex {
    pub fn load(path: &Path, general_only: bool) -> Result<Self> {
        let sentences = read_corpus(path, general_only)?;
        let index = IdfIndex::from_texts(&sentences)?;
        Ok(Self { sentences, index })
    }

    pub fn corpus(&self, retrieval: RetrievalConfig) -> Corpus<'_> {
        Corpus {
            sentences: &self.sentences,
            index: &self.index,
            retrieval,
            fallback_sentences: 5,
        }
    }
}

pub fn load_instances(path: &Path, format: Format, corpus: Option<&CorpusIndex>) -> Result<Vec<QuestionInstance>> {
    let corpus = corpus.map(|c| c.corpus(RetrievalConfig::default()));
    load_dataset(path, format, corpus.as_ref())
}

pub fn instances_from_records(records: &[EntityQueryRecord]) -> Result<Vec<QuestionInstance>> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        out.extend(entity_query_instance(r)?);
    }
    Ok(out)
}

pub fn prepare(instances: Vec<QuestionInstance>, extraction: &ExtractionConfig) -> Vec<Prepared> {
    prepare_all(instances, extraction)
}

/// Embedding table over every word of `data`.
pub fn table_for<'a>(
    data: impl IntoIterator<Item = &'a Prepared>,
    embeddings: Option<&Path>,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let vocab: BTreeSet<String> = vocabulary(data.into_iter().map(|p| &p.instance));
    load_table(embeddings, &vocab, dim, seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_dev_accuracy: Option<f64>,
    pub epochs_run: usize,
    pub aborted: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub vocabulary: usize,
    /// Vocabulary words found in the vector file.
    pub pretrained_words: usize,
}

/// Trains on prepared data and writes the best model to
/// `config.checkpoint` whenever it improves. The embedding seed is the run
/// seed.
pub fn train_with_checkpoints(
    config: &TrainConfig,
    table: &EmbeddingTable,
    train_data: &[Prepared],
    dev_data: &[Prepared],
) -> Result<(TrainOutcome, TrainSummary)> {
    let save = |model: &pathqa_core::scorer::Model, record: &crate::trainer::EpochRecord| -> Result<()> {
        let Some(path) = &config.checkpoint else {
            return Ok(());
        };
        let mut ckpt = Checkpoint::from_model(model, config.seed, config.embeddings.clone());
        ckpt.metadata.insert("epoch".into(), record.epoch.into());
        if let Some(a) = record.dev_accuracy {
            ckpt.metadata.insert("dev_accuracy".into(), a.into());
        }
        ckpt.save(path)
    };
    let outcome = train(config, table, train_data, dev_data, save)?;
    let summary = TrainSummary {
        best_epoch: outcome.best_epoch,
        best_dev_accuracy: outcome.best_dev_accuracy,
        epochs_run: outcome.history.len() - 1,
        aborted: outcome.aborted.clone(),
        checkpoint: config.checkpoint.clone(),
        vocabulary: table.len(),
        pretrained_words: table.pretrained_count(),
    };
    Ok((outcome, summary))
}

/// Loads the files named in `config`, trains and checkpoints.
pub fn train_from_config(config: &TrainConfig) -> Result<(TrainOutcome, TrainSummary)> {
    config.validate()?;
    let train_path = config
        .train
        .as_deref()
        .ok_or_else(|| Error::Config("no training data given".into()))?;
    let corpus = match &config.corpus {
        Some(p) => Some(CorpusIndex::load(p, config.general_only)?),
        None => None,
    };
    let train_data = prepare(load_instances(train_path, config.format, corpus.as_ref())?, &config.extraction);
    let dev_data = match &config.dev {
        Some(p) => prepare(load_instances(p, config.format, corpus.as_ref())?, &config.extraction),
        None => Vec::new(),
    };
    let table = table_for(
        train_data.iter().chain(&dev_data),
        config.embeddings.as_deref(),
        config.model.embedding_dim,
        config.seed,
    )?;
    train_with_checkpoints(config, &table, &train_data, &dev_data)
}
