use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{tokenize, Passage, Token};

/// One multiple-choice question with its supporting passages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionInstance {
    pub id: String,
    pub query_tokens: Vec<Token>,
    /// Known entities of the question; paths start at one of these.
    pub head_entities: Vec<String>,
    pub candidates: Vec<Vec<Token>>,
    pub candidate_texts: Vec<String>,
    /// Entity strings standing for each candidate when paths end. A plain
    /// entity candidate is its own single tail.
    pub tail_entities: Vec<Vec<String>>,
    pub passages: Vec<Passage>,
    #[serde(default)]
    pub answer_index: Option<usize>,
}

impl QuestionInstance {
    /// Builds an instance whose candidates are their own tail entities.
    pub fn new(
        id: impl Into<String>,
        query: &str,
        head_entities: Vec<String>,
        candidates: &[String],
        passages: Vec<Passage>,
        answer_index: Option<usize>,
    ) -> Result<Self> {
        let tails = candidates.iter().map(|c| alloc::vec![c.clone()]).collect();
        Self::with_tails(id, query, head_entities, candidates, tails, passages, answer_index)
    }

    pub fn with_tails(
        id: impl Into<String>,
        query: &str,
        head_entities: Vec<String>,
        candidates: &[String],
        tail_entities: Vec<Vec<String>>,
        passages: Vec<Passage>,
        answer_index: Option<usize>,
    ) -> Result<Self> {
        let instance = Self {
            id: id.into(),
            query_tokens: tokenize(query),
            head_entities,
            candidates: candidates.iter().map(|c| tokenize(c)).collect(),
            candidate_texts: candidates.to_vec(),
            tail_entities,
            passages,
            answer_index,
        };
        instance.validate()?;
        Ok(instance)
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.len() < 2 {
            return Err(Error::Config(format!(
                "instance {}: needs at least 2 candidates, got {}",
                self.id,
                self.candidates.len()
            )));
        }
        if self.candidates.iter().any(Vec::is_empty) {
            return Err(Error::Config(format!("instance {}: empty candidate", self.id)));
        }
        if self.tail_entities.len() != self.candidates.len() {
            return Err(Error::Config(format!(
                "instance {}: {} tail lists for {} candidates",
                self.id,
                self.tail_entities.len(),
                self.candidates.len()
            )));
        }
        if let Some(a) = self.answer_index {
            if a >= self.candidates.len() {
                return Err(Error::Config(format!(
                    "instance {}: answer index {a} out of range for {} candidates",
                    self.id,
                    self.candidates.len()
                )));
            }
        }
        Ok(())
    }

    pub fn num_candidates(&self) -> usize {
        self.candidates.len()
    }
}
