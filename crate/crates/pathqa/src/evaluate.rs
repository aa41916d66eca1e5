//! Parallel path extraction and scoring. Results keep input order and do not
//! depend on the number of worker threads.

use pathqa_core::embedding::EmbeddingTable;
use pathqa_core::instance::QuestionInstance;
use pathqa_core::paths::ExtractionConfig;
use pathqa_core::scorer::{score_instance, InstanceScores, Model};
use pathqa_core::train::{build_report, EvalReport, Prepared};
use rayon::prelude::*;

use crate::error::Result;

pub fn prepare_all(instances: Vec<QuestionInstance>, config: &ExtractionConfig) -> Vec<Prepared> {
    instances.into_par_iter().map(|i| Prepared::new(i, config)).collect()
}

pub fn score_all(model: &Model, table: &EmbeddingTable, data: &[Prepared]) -> Result<Vec<InstanceScores>> {
    Ok(data
        .par_iter()
        .map(|p| score_instance(model, table, &p.instance, &p.paths))
        .collect::<pathqa_core::Result<Vec<_>>>()?)
}

pub fn evaluate(model: &Model, table: &EmbeddingTable, data: &[Prepared]) -> Result<EvalReport> {
    let scores = score_all(model, table, data)?;
    Ok(build_report(data, scores)?)
}
