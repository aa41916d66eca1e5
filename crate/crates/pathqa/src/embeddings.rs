//! Whitespace-separated text vector files (`word v1 .. v_dim` per line).

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use pathqa_core::embedding::{parse_embedding_line, EmbeddingRecord, EmbeddingTable};

use crate::error::{Error, Result};

/// Streams `path` keeping only records whose lowercase word is in `vocab`.
pub fn read_vectors(path: &Path, vocab: &BTreeSet<String>, dim: usize) -> Result<Vec<EmbeddingRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(rec) = parse_embedding_line(&line, i + 1, dim, |w| vocab.contains(&w.to_lowercase()))? {
            out.push(rec);
        }
    }
    Ok(out)
}

/// Table over `vocab`; words missing from the file (or every word, without a
/// file) get seeded random vectors.
pub fn load_table(path: Option<&Path>, vocab: &BTreeSet<String>, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let records = match path {
        Some(p) => read_vectors(p, vocab, dim)?,
        None => Vec::new(),
    };
    let table = EmbeddingTable::build(dim, vocab.iter(), &records, seed)?;
    if path.is_some() {
        log::info!("embeddings: {} of {} words pretrained", table.pretrained_count(), table.len());
    }
    Ok(table)
}
