//! Sentence corpora for retrieval: one sentence per line.

use std::path::Path;

use pathqa_core::retrieval::filter_general_sentences;

use crate::error::{Error, Result};

/// Non-empty trimmed lines. With `general_only`, sentences that are not
/// general statements are dropped.
pub fn read_corpus(path: &Path, general_only: bool) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    Ok(if general_only { filter_general_sentences(&lines) } else { lines })
}
