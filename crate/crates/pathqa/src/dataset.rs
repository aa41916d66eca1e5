//! Dataset files.
//!
//! A file is either a JSON array of records or one record per line. Two
//! record schemas are understood:
//!
//! * entity-query records (`wikihop` and `synthetic` formats):
//!   `{"id", "query", "candidates": [..], "supports": [..], "answer"?}` where
//!   `query` is `"relation head words"` or `{"relation", "head"}`;
//! * open-domain records (`openbookqa`):
//!   `{"id", "question", "choices": [..], "answer_key"?, "supports"?}` where
//!   `answer_key` is a letter (`"A"` is the first choice) or an index.
//!   Without `supports`, passages are retrieved from a sentence corpus.
//!
//! A support is a string, or `{"text"}` / `{"sentences": [..]}` with an
//! optional `"entities": [..]` list that replaces the chunker for that
//! passage. Pre-segmented sentences take precedence over segmentation.

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use pathqa_core::instance::QuestionInstance;
use pathqa_core::retrieval::{retrieve_chains, retrieve_single_sentences, IdfIndex, RetrievalConfig};
use pathqa_core::text::{candidate_entities, tokenize, Passage};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Wikihop,
    Openbookqa,
    Synthetic,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wikihop" => Ok(Self::Wikihop),
            "openbookqa" => Ok(Self::Openbookqa),
            "synthetic" => Ok(Self::Synthetic),
            _ => Err(Error::Config(format!("unknown format `{s}` (wikihop, openbookqa, synthetic)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Query {
    Tuple { relation: String, head: String },
    Text(String),
}

impl Query {
    /// `(relation, head entity)`. A text query's first word is the relation.
    pub fn parts(&self) -> (String, String) {
        match self {
            Self::Tuple { relation, head } => (relation.clone(), head.clone()),
            Self::Text(text) => {
                let text = text.trim();
                match text.split_once(char::is_whitespace) {
                    Some((rel, head)) => (rel.to_string(), head.trim().to_string()),
                    None => (text.to_string(), String::new()),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Support {
    Text(String),
    Structured {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        text: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sentences: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        entities: Option<Vec<String>>,
    },
}

impl Support {
    fn to_passage(&self, id: usize) -> std::result::Result<Passage, &'static str> {
        match self {
            Self::Text(text) => Ok(Passage::new(id, text)),
            Self::Structured {
                text,
                sentences,
                entities,
            } => {
                let mut p = match (sentences, text) {
                    (Some(s), _) => Passage::from_sentences(id, s),
                    (None, Some(t)) => Passage::new(id, t),
                    (None, None) => return Err("needs `text` or `sentences`"),
                };
                p.annotated_entities = entities.clone();
                Ok(p)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityQueryRecord {
    pub id: String,
    pub query: Query,
    pub candidates: Vec<String>,
    #[serde(default)]
    pub supports: Vec<Support>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerKey {
    Index(usize),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenRecord {
    pub id: String,
    pub question: String,
    pub choices: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_key: Option<AnswerKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supports: Option<Vec<Support>>,
}

/// Sentence corpus used to build passages for open-domain records.
pub struct Corpus<'a> {
    pub sentences: &'a [String],
    pub index: &'a IdfIndex,
    pub retrieval: RetrievalConfig,
    /// Single sentences kept per choice when no chain clears the threshold.
    pub fallback_sentences: usize,
}

fn record_error(id: &str, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Record {
        id: id.to_string(),
        field: field.into(),
        message: message.into(),
    }
}

fn record_id(value: &Value, position: usize) -> String {
    match value.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => format!("#{position}"),
    }
}

fn parse_record<T: serde::de::DeserializeOwned>(mut value: Value, position: usize) -> Result<T> {
    let id = record_id(&value, position);
    if let Some(n @ Value::Number(_)) = value.get("id").cloned() {
        value["id"] = Value::String(n.to_string());
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let field = e.path().to_string();
        record_error(&id, field, e.into_inner().to_string())
    })
}

/// Typed open-domain records, in input order.
pub fn open_records(values: Vec<Value>) -> Result<Vec<OpenRecord>> {
    values.into_iter().enumerate().map(|(i, v)| parse_record(v, i)).collect()
}

/// Raw JSON records of a file: a JSON array, or a sequence of values
/// (usually one per line).
pub fn read_records(path: &Path) -> Result<Vec<Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_records(text: &str) -> std::result::Result<Vec<Value>, serde_json::Error> {
    let trimmed = text.trim_start();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed);
    }
    serde_json::Deserializer::from_str(text).into_iter().collect()
}

/// Converts an entity-query record. Records without candidates yield
/// `Ok(None)` and a warning.
pub fn entity_query_instance(record: &EntityQueryRecord) -> Result<Option<QuestionInstance>> {
    let id = record.id.as_str();
    if record.candidates.is_empty() {
        log::warn!("record `{id}` has no candidates; skipped");
        return Ok(None);
    }
    if let Some(k) = record.candidates.iter().position(|c| tokenize(c).is_empty()) {
        return Err(record_error(id, format!("candidates[{k}]"), "empty candidate"));
    }
    let (relation, head) = record.query.parts();
    if head.is_empty() {
        return Err(record_error(id, "query", "query has no head entity"));
    }
    let passages = record
        .supports
        .iter()
        .enumerate()
        .map(|(i, s)| s.to_passage(i).map_err(|m| record_error(id, format!("supports[{i}]"), m)))
        .collect::<Result<Vec<_>>>()?;
    let answer = match &record.answer {
        None => None,
        Some(a) => {
            let key = a.trim().to_lowercase();
            let k = record
                .candidates
                .iter()
                .position(|c| c.trim().to_lowercase() == key)
                .ok_or_else(|| record_error(id, "answer", format!("`{a}` is not one of the candidates")))?;
            Some(k)
        }
    };
    let query = format!("{} {}", relation.replace('_', " "), head);
    let instance = QuestionInstance::new(id, &query, vec![head], &record.candidates, passages, answer)
        .map_err(|e| record_error(id, "candidates", e.to_string()))?;
    Ok(Some(instance))
}

fn entity_surfaces(text: &str) -> Vec<String> {
    let passage = Passage::new(0, text);
    candidate_entities(&passage).into_iter().map(|m| m.surface).collect()
}

/// Converts an open-domain record. Head entities are the chunked entities of
/// the question; each choice's tails are its chunked entities (or the whole
/// choice when nothing is chunked). Passages come from `supports` or, failing
/// that, from chains retrieved per choice, one sentence per passage.
pub fn open_instance(record: &OpenRecord, corpus: Option<&Corpus<'_>>) -> Result<Option<QuestionInstance>> {
    let id = record.id.as_str();
    if record.choices.is_empty() {
        log::warn!("record `{id}` has no choices; skipped");
        return Ok(None);
    }
    if let Some(k) = record.choices.iter().position(|c| tokenize(c).is_empty()) {
        return Err(record_error(id, format!("choices[{k}]"), "empty choice"));
    }
    let answer = match &record.answer_key {
        None => None,
        Some(AnswerKey::Index(k)) => Some(*k),
        Some(AnswerKey::Label(label)) => {
            let label = label.trim();
            let k = match label.parse::<usize>() {
                Ok(k) => k,
                Err(_) => {
                    let mut chars = label.chars();
                    match (chars.next(), chars.next()) {
                        (Some(c), None) if c.is_ascii_alphabetic() => (c.to_ascii_uppercase() as u8 - b'A') as usize,
                        _ => return Err(record_error(id, "answer_key", format!("unrecognised key `{label}`"))),
                    }
                }
            };
            Some(k)
        }
    };
    if answer.is_some_and(|k| k >= record.choices.len()) {
        return Err(record_error(id, "answer_key", "key is outside the choice list"));
    }
    let passages = match (&record.supports, corpus) {
        (Some(supports), _) => supports
            .iter()
            .enumerate()
            .map(|(i, s)| s.to_passage(i).map_err(|m| record_error(id, format!("supports[{i}]"), m)))
            .collect::<Result<Vec<_>>>()?,
        (None, Some(corpus)) => retrieved_passages(&record.question, &record.choices, corpus),
        (None, None) => {
            return Err(record_error(
                id,
                "supports",
                "no supports and no corpus to retrieve passages from",
            ))
        }
    };
    let heads = entity_surfaces(&record.question);
    let tails = record
        .choices
        .iter()
        .map(|c| {
            let t = entity_surfaces(c);
            if t.is_empty() {
                vec![c.clone()]
            } else {
                t
            }
        })
        .collect();
    let instance = QuestionInstance::with_tails(id, &record.question, heads, &record.choices, tails, passages, answer)
        .map_err(|e| record_error(id, "choices", e.to_string()))?;
    Ok(Some(instance))
}

/// One passage per distinct sentence on a retrieved chain, in order of first
/// appearance over the choices.
pub fn retrieved_passages(question: &str, choices: &[String], corpus: &Corpus<'_>) -> Vec<Passage> {
    let q = tokenize(question);
    let mut seen = BTreeSet::new();
    let mut ids = Vec::new();
    for choice in choices {
        let c = tokenize(choice);
        let chains = retrieve_chains(&q, &c, corpus.index, &corpus.retrieval);
        if chains.is_empty() {
            for (s, _) in retrieve_single_sentences(&q, &c, corpus.index, corpus.fallback_sentences) {
                if seen.insert(s) {
                    ids.push(s);
                }
            }
        }
        for chain in chains {
            for s in [chain.s1_id, chain.s2_id] {
                if seen.insert(s) {
                    ids.push(s);
                }
            }
        }
    }
    ids.into_iter()
        .enumerate()
        .map(|(i, s)| Passage::new(i, &corpus.sentences[s]))
        .collect()
}

/// Parses records of `format` into instances, skipping records without
/// candidates.
pub fn instances_from_values(values: Vec<Value>, format: Format, corpus: Option<&Corpus<'_>>) -> Result<Vec<QuestionInstance>> {
    let mut out = Vec::with_capacity(values.len());
    for (position, value) in values.into_iter().enumerate() {
        let instance = match format {
            Format::Wikihop | Format::Synthetic => {
                entity_query_instance(&parse_record::<EntityQueryRecord>(value, position)?)?
            }
            Format::Openbookqa => open_instance(&parse_record::<OpenRecord>(value, position)?, corpus)?,
        };
        out.extend(instance);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path, format: Format, corpus: Option<&Corpus<'_>>) -> Result<Vec<QuestionInstance>> {
    instances_from_values(read_records(path)?, format, corpus)
}

/// Writes records as JSON lines.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Every lowercase token of the queries, candidates and passages.
pub fn vocabulary<'a>(instances: impl IntoIterator<Item = &'a QuestionInstance>) -> BTreeSet<String> {
    let mut vocab = BTreeSet::new();
    for inst in instances {
        let tokens = inst
            .query_tokens
            .iter()
            .chain(inst.candidates.iter().flatten())
            .chain(inst.passages.iter().flat_map(|p| p.tokens.iter()));
        for t in tokens {
            vocab.insert(t.lowercase.clone());
        }
    }
    vocab
}
