//! Per-instance explanations: candidate probabilities and top-scoring paths.

use pathqa_core::embedding::EmbeddingTable;
use pathqa_core::scorer::{score_instance, Model};
use pathqa_core::train::Prepared;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateProb {
    pub candidate: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageExcerpt {
    pub id: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathExplanation {
    pub rank: usize,
    pub path_index: usize,
    pub candidate: String,
    /// Head, intermediate entities and tail as they appear in the passages.
    pub entity_chain: Vec<String>,
    pub passages: Vec<PassageExcerpt>,
    pub z_ctx: f64,
    pub z_psg: f64,
    pub z: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Answered,
    /// No path reaches any candidate.
    Unanswerable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub id: String,
    pub query: String,
    pub status: Status,
    pub predicted: Option<String>,
    pub gold: Option<String>,
    pub candidates: Vec<CandidateProb>,
    pub paths: Vec<PathExplanation>,
}

/// Explains one instance with its `k` best paths (all of them when there are
/// fewer), ordered by normalised score, then path order.
pub fn explain(model: &Model, table: &EmbeddingTable, data: &Prepared, k: usize) -> Result<Explanation> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let inst = &data.instance;
    let scores = score_instance(model, table, inst, &data.paths)?;
    let mut ranked: Vec<_> = scores.paths.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.path_index.cmp(&b.path_index)));
    let paths = ranked
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(rank, s)| {
            let path = &data.paths[s.path_index];
            PathExplanation {
                rank: rank + 1,
                path_index: s.path_index,
                candidate: inst.candidate_texts[s.candidate_index].clone(),
                entity_chain: path.entity_chain().into_iter().map(String::from).collect(),
                passages: path
                    .passage_ids
                    .iter()
                    .map(|&id| PassageExcerpt {
                        id,
                        text: inst.passages[id].text.clone(),
                    })
                    .collect(),
                z_ctx: s.z_ctx,
                z_psg: s.z_psg,
                z: s.z,
                score: s.score,
            }
        })
        .collect();
    let text = |k: usize| inst.candidate_texts[k].clone();
    Ok(Explanation {
        id: inst.id.clone(),
        query: inst.query_tokens.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" "),
        status: if scores.answerable() {
            Status::Answered
        } else {
            Status::Unanswerable
        },
        predicted: scores.prediction().map(text),
        gold: inst.answer_index.map(text),
        candidates: inst
            .candidate_texts
            .iter()
            .zip(&scores.candidate_probs)
            .map(|(c, &p)| CandidateProb {
                candidate: c.clone(),
                probability: p,
            })
            .collect(),
        paths,
    })
}
