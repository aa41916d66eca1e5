//! Frozen word vectors.
//!
//! Keys are lowercase token texts. Words found in a pretrained file keep the
//! file's values bit for bit; every other word gets a vector drawn uniformly
//! from [-0.1, 0.1] by a stream seeded from `(seed, word)`, so its value does
//! not depend on vocabulary order or on which other words were loaded.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::{fnv1a, Rng};

pub const DEFAULT_DIM: usize = 300;
pub const OOV_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    seed: u64,
    index: BTreeMap<String, usize>,
    vectors: Vec<f64>,
    from_file: usize,
}

/// One parsed record of a whitespace-separated text vector file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub word: String,
    pub values: Vec<f64>,
}

/// Parses one line `word v1 .. v_dim`. Words containing spaces are allowed:
/// the last `dim` fields are the vector.
///
/// Values are parsed only when `wanted(word)` holds, but the field count is
/// checked on every line. Returns `Ok(None)` for blank or unwanted lines.
pub fn parse_embedding_line(
    line: &str,
    line_no: usize,
    dim: usize,
    wanted: impl Fn(&str) -> bool,
) -> Result<Option<EmbeddingRecord>> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.is_empty() {
        return Ok(None);
    }
    if fields.len() < dim + 1 {
        return Err(Error::EmbeddingDim {
            line: line_no,
            expected: dim,
            found: fields.len() - 1,
        });
    }
    let split = fields.len() - dim;
    let word = fields[..split].join(" ");
    if !wanted(&word) {
        return Ok(None);
    }
    let values = fields[split..]
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|e| Error::EmbeddingParse {
                line: line_no,
                message: format!("`{f}`: {e}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(EmbeddingRecord { word, values }))
}

/// Seeded out-of-vocabulary vector for `word`.
pub fn oov_vector(word: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(seed ^ fnv1a(word.as_bytes()));
    (0..dim).map(|_| rng.uniform(-OOV_SCALE, OOV_SCALE)).collect()
}

impl EmbeddingTable {
    /// Table over exactly `vocab` (lowercased). `pretrained` is consulted with
    /// the lowercase word; the first record for a word wins.
    pub fn build<I, S>(dim: usize, vocab: I, pretrained: &[EmbeddingRecord], seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut file: BTreeMap<String, &[f64]> = BTreeMap::new();
        for rec in pretrained {
            if rec.values.len() != dim {
                return Err(Error::EmbeddingDim {
                    line: 0,
                    expected: dim,
                    found: rec.values.len(),
                });
            }
            file.entry(rec.word.to_lowercase()).or_insert(&rec.values);
        }
        let words: alloc::collections::BTreeSet<String> =
            vocab.into_iter().map(|w| w.as_ref().to_lowercase()).collect();
        let mut index = BTreeMap::new();
        let mut vectors = Vec::with_capacity(words.len() * dim);
        let mut from_file = 0;
        for (i, w) in words.into_iter().enumerate() {
            match file.get(&w) {
                Some(v) => {
                    vectors.extend_from_slice(v);
                    from_file += 1;
                }
                None => vectors.extend(oov_vector(&w, dim, seed)),
            }
            index.insert(w, i);
        }
        Ok(Self {
            dim,
            seed,
            index,
            vectors,
            from_file,
        })
    }

    /// Table with no pretrained vectors: every word is seeded random.
    pub fn random<I, S>(dim: usize, vocab: I, seed: u64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::build(dim, vocab, &[], seed).expect("no records to mismatch")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn pretrained_count(&self) -> usize {
        self.from_file
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(&word.to_lowercase())
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(&word.to_lowercase())
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Writes the vector for `word` into `out`; words outside the table get
    /// their seeded OOV vector.
    pub fn write_vector(&self, word: &str, out: &mut [f64]) {
        match self.get(word) {
            Some(v) => out.copy_from_slice(v),
            None => out.copy_from_slice(&oov_vector(&word.to_lowercase(), self.dim, self.seed)),
        }
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }
}

impl core::fmt::Display for EmbeddingTable {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "{} words x {} dims ({} pretrained)",
            self.len(),
            self.dim,
            self.from_file
        )
    }
}
