//! Idf-weighted two-sentence chain retrieval for open-domain questions.
//!
//! A chain `q → s1 → s2 → c` is scored as the product of three overlap
//! ratios `idf(q, s1) · idf(s1, s2) · idf(s2, c)` where
//!
//! ```text
//! idf(x, y) = Σ_{w ∈ x ∩ y} idf(w) / min(Σ_{w ∈ x} idf(w), Σ_{w ∈ y} idf(w))
//! ```
//!
//! over stopword-free lowercase token sets, and `idf(w) = ln(N / df(w))`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stopwords::is_stopword;
use crate::text::{tokenize, Token};

pub const DEFAULT_THRESHOLD: f64 = 0.08;
pub const DEFAULT_TOP_K: usize = 100;
pub const DEFAULT_BEAM: usize = 200;
/// Sentences with fewer word tokens than this are not general statements.
pub const MIN_GENERAL_SENTENCE_WORDS: usize = 3;

/// Keeps sentences that look like general statements: the first word looks
/// plural (ends in `s` but not `ss`), no later word is capitalized, and the
/// sentence has at least [`MIN_GENERAL_SENTENCE_WORDS`] words.
pub fn filter_general_sentences<S: AsRef<str>>(corpus: &[S]) -> Vec<String> {
    corpus
        .iter()
        .map(AsRef::as_ref)
        .filter(|s| is_general_sentence(s))
        .map(String::from)
        .collect()
}

pub fn is_general_sentence(sentence: &str) -> bool {
    let tokens = tokenize(sentence);
    let words: Vec<&Token> = tokens.iter().filter(|t| t.is_word()).collect();
    if words.len() < MIN_GENERAL_SENTENCE_WORDS {
        return false;
    }
    let first = &words[0].lowercase;
    let plural = first.chars().all(char::is_alphabetic) && first.ends_with('s') && !first.ends_with("ss");
    plural && words[1..].iter().all(|t| !t.is_capitalized())
}

/// Lowercase, stopword-free, deduplicated content tokens.
pub fn content_terms(tokens: &[Token]) -> Vec<String> {
    let set: BTreeSet<&str> = tokens
        .iter()
        .filter(|t| t.is_word() && !is_stopword(&t.lowercase))
        .map(|t| t.lowercase.as_str())
        .collect();
    set.into_iter().map(String::from).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfIndex {
    n: usize,
    df: BTreeMap<String, usize>,
    inverted: BTreeMap<String, Vec<usize>>,
    /// Sorted content terms per sentence.
    sentences: Vec<Vec<String>>,
}

impl IdfIndex {
    pub fn build(corpus: &[Vec<Token>]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut inverted: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let sentences: Vec<Vec<String>> = corpus.iter().map(|s| content_terms(s)).collect();
        for (id, terms) in sentences.iter().enumerate() {
            for t in terms {
                inverted.entry(t.clone()).or_default().push(id);
            }
        }
        let df = inverted.iter().map(|(t, ids)| (t.clone(), ids.len())).collect();
        Ok(Self {
            n: corpus.len(),
            df,
            inverted,
            sentences,
        })
    }

    pub fn from_texts<S: AsRef<str>>(corpus: &[S]) -> Result<Self> {
        let tokens: Vec<Vec<Token>> = corpus.iter().map(|s| tokenize(s.as_ref())).collect();
        Self::build(&tokens)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    /// `ln(N / df)`, or `ln(N)` for a term the corpus never contains.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n as f64;
        match self.df.get(term) {
            Some(&df) => libm::log(n / df as f64),
            None => libm::log(n),
        }
    }

    pub fn postings(&self, term: &str) -> &[usize] {
        self.inverted.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn sentence_terms(&self, id: usize) -> &[String] {
        &self.sentences[id]
    }

    fn weight(&self, terms: &[String]) -> f64 {
        terms.iter().map(|t| self.idf(t)).sum()
    }

    /// Overlap ratio between two term sets; both must be sorted and unique.
    /// Returns 0 when either side carries no idf mass.
    pub fn overlap(&self, x: &[String], y: &[String]) -> f64 {
        let denom = self.weight(x).min(self.weight(y));
        if denom <= 0.0 {
            return 0.0;
        }
        let mut shared = 0.0;
        let (mut i, mut j) = (0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    shared += self.idf(&x[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        shared / denom
    }

    /// Sentence ids sharing at least one term with `terms`, ascending.
    fn touching(&self, terms: &[String]) -> BTreeSet<usize> {
        terms.iter().flat_map(|t| self.postings(t).iter().copied()).collect()
    }
}

/// Overlap ratio between two token lists after stopword removal.
pub fn idf_overlap(x: &[Token], y: &[Token], index: &IdfIndex) -> f64 {
    index.overlap(&content_terms(x), &content_terms(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceChain {
    pub s1_id: usize,
    pub s2_id: usize,
    pub score: f64,
    pub question_s1: f64,
    pub s1_s2: f64,
    pub s2_candidate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalConfig {
    pub threshold: f64,
    pub top_k: usize,
    /// Number of first-hop sentences expanded per question.
    pub beam: usize,
    /// Apply the threshold to `idf(q, s1)` and `idf(q, s1) · idf(s1, s2)` as
    /// well as to the final product.
    pub prune_prefix: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            top_k: DEFAULT_TOP_K,
            beam: DEFAULT_BEAM,
            prune_prefix: true,
        }
    }
}

/// Descending score, then ascending `(s1, s2)`.
pub fn chain_order(a: &SentenceChain, b: &SentenceChain) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then((a.s1_id, a.s2_id).cmp(&(b.s1_id, b.s2_id)))
}

/// Beam search for chains linking `question` to `candidate`.
///
/// First hops are the sentences sharing a term with the question, ranked by
/// `idf(q, s1)` (ties by id) and cut to `beam`. Second hops are sentences
/// sharing a term with both `s1` and the candidate. Returns at most `top_k`
/// chains ordered by [`chain_order`]; empty when nothing clears the threshold.
pub fn retrieve_chains(
    question: &[Token],
    candidate: &[Token],
    index: &IdfIndex,
    config: &RetrievalConfig,
) -> Vec<SentenceChain> {
    let q = content_terms(question);
    let c = content_terms(candidate);
    if q.is_empty() || c.is_empty() || config.top_k == 0 {
        return Vec::new();
    }
    let admit = |score: f64| score > 0.0 && score >= config.threshold;
    let mut first: Vec<(usize, f64)> = index
        .touching(&q)
        .into_iter()
        .map(|id| (id, index.overlap(&q, index.sentence_terms(id))))
        .filter(|&(_, s)| if config.prune_prefix { admit(s) } else { s > 0.0 })
        .collect();
    first.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    first.truncate(config.beam);

    let near_candidate = index.touching(&c);
    let mut chains = Vec::new();
    for &(s1, q_s1) in &first {
        let s1_terms = index.sentence_terms(s1);
        for s2 in index.touching(s1_terms).intersection(&near_candidate) {
            let s2 = *s2;
            if s2 == s1 {
                continue;
            }
            let s2_terms = index.sentence_terms(s2);
            let s1_s2 = index.overlap(s1_terms, s2_terms);
            if config.prune_prefix && !admit(q_s1 * s1_s2) {
                continue;
            }
            let s2_c = index.overlap(s2_terms, &c);
            let score = q_s1 * s1_s2 * s2_c;
            if admit(score) {
                chains.push(SentenceChain {
                    s1_id: s1,
                    s2_id: s2,
                    score,
                    question_s1: q_s1,
                    s1_s2,
                    s2_candidate: s2_c,
                });
            }
        }
    }
    chains.sort_by(chain_order);
    chains.truncate(config.top_k);
    chains
}

/// Single sentences touching both the question and the candidate, ranked by
/// `idf(q, s) · idf(s, c)`; the fallback when no chain clears the threshold.
pub fn retrieve_single_sentences(
    question: &[Token],
    candidate: &[Token],
    index: &IdfIndex,
    top_k: usize,
) -> Vec<(usize, f64)> {
    let q = content_terms(question);
    let c = content_terms(candidate);
    let near_c = index.touching(&c);
    let mut hits: Vec<(usize, f64)> = index
        .touching(&q)
        .intersection(&near_c)
        .map(|&id| {
            let terms = index.sentence_terms(id);
            (id, index.overlap(&q, terms) * index.overlap(terms, &c))
        })
        .filter(|&(_, s)| s > 0.0)
        .collect();
    hits.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    hits.truncate(top_k);
    hits
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn general_sentence_filter() {
        let kept = filter_general_sentences(&["Mammals have fur", "Paris is in France", "", "Glass breaks easily ."]);
        assert_eq!(kept, vec![String::from("Mammals have fur")]);
        assert!(!is_general_sentence("Birds fly"));
        assert!(is_general_sentence("Plants need sunlight to grow ."));
    }

    #[test]
    fn idf_values() {
        let idx = IdfIndex::from_texts(&["apple pie", "apple tart", "plum cake", "plum jam"]).unwrap();
        assert!(close(idx.idf("apple"), core::f64::consts::LN_2));
        assert_eq!(idx.df("apple"), 2);
        let all = IdfIndex::from_texts(&["tea now", "tea later"]).unwrap();
        assert_eq!(all.idf("tea"), 0.0);
        assert!(close(idx.idf("durian"), libm::log(4.0)));
        assert_eq!(IdfIndex::from_texts::<&str>(&[]), Err(Error::EmptyCorpus));
    }

    #[test]
    fn postings_sorted() {
        let idx = IdfIndex::from_texts(&["b k", "c", "k d", "k"]).unwrap();
        assert_eq!(idx.postings("k"), &[0, 2, 3]);
    }

    #[test]
    fn overlap_examples() {
        // p, q, r each in 2 of 4 sentences -> idf ln 2
        let idx = IdfIndex::from_texts(&["p q", "r x", "p y", "q r"]).unwrap();
        let t = |s: &str| tokenize(s);
        assert!(close(idf_overlap(&t("p q"), &t("p q"), &idx), 1.0));
        assert_eq!(idf_overlap(&t("p"), &t("r"), &idx), 0.0);
        assert!(close(idf_overlap(&t("p q"), &t("q r"), &idx), 0.5));
        assert!(close(idf_overlap(&t("the p q"), &t("q r of"), &idx), 0.5));
        // all-zero idf mass
        let flat = IdfIndex::from_texts(&["z", "z"]).unwrap();
        assert_eq!(idf_overlap(&t("z"), &t("z"), &flat), 0.0);
    }

    #[test]
    fn threshold_above_one_returns_nothing() {
        let idx = IdfIndex::from_texts(&["cats chase mice", "mice eat cheese", "dogs chase cats"]).unwrap();
        let cfg = RetrievalConfig {
            threshold: 1.0 + 1e-9,
            ..RetrievalConfig::default()
        };
        assert!(retrieve_chains(&tokenize("what do cats chase"), &tokenize("cheese"), &idx, &cfg).is_empty());
        let found = retrieve_chains(
            &tokenize("what do cats chase"),
            &tokenize("cheese"),
            &idx,
            &RetrievalConfig::default(),
        );
        assert!(!found.is_empty());
        assert!(found.iter().all(|c| c.score > 0.0 && c.score <= 1.0));
    }
}
