//! Entity path enumeration across passages.
//!
//! For two hops: take a passage `p1` mentioning a head entity, collect the
//! entities in the head's sentence and the one after it, follow each of them
//! to a different passage `p2`, and keep `p2` if it mentions a candidate.
//! Longer paths repeat the collect/follow step from the entity just reached.
//! A candidate mentioned next to the head in one passage gives a single-hop
//! path whose intermediate entity is null.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::QuestionInstance;
use crate::text::{chunk_spans, entity_key, MentionSpan, Passage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    /// Longest path in passages; single-passage paths are always included.
    pub max_hops: usize,
    /// Neighbor entities collected per anchor mention.
    pub max_neighbors: usize,
    /// Passages followed per intermediate entity.
    pub max_passages_per_entity: usize,
    pub max_paths_per_candidate: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            max_hops: 2,
            max_neighbors: 32,
            max_passages_per_entity: 16,
            max_paths_per_candidate: 64,
        }
    }
}

impl ExtractionConfig {
    /// A configuration whose caps never bind.
    pub fn unbounded(max_hops: usize) -> Self {
        Self {
            max_hops,
            max_neighbors: usize::MAX,
            max_passages_per_entity: usize::MAX,
            max_paths_per_candidate: usize::MAX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_hops == 0
            || self.max_neighbors == 0
            || self.max_passages_per_entity == 0
            || self.max_paths_per_candidate == 0
        {
            return Err(Error::Config("extraction limits must all be positive".into()));
        }
        Ok(())
    }
}

/// An intermediate entity: its mention in the passage it was reached from and
/// its mention in the passage the path moves to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub source: MentionSpan,
    pub target: MentionSpan,
}

impl Link {
    pub fn key(&self) -> &str {
        &self.source.entity_key
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub head: MentionSpan,
    pub links: Vec<Link>,
    pub tail: MentionSpan,
    /// Positions in the instance's passage list, in path order.
    pub passage_ids: Vec<usize>,
    pub candidate_index: usize,
    pub hop_count: usize,
}

/// Identity of a path for deduplication: entity keys, candidate and passages.
pub type PathKey = (String, Vec<String>, usize, Vec<usize>);

impl Path {
    pub fn key(&self) -> PathKey {
        (
            self.head.entity_key.clone(),
            self.links.iter().map(|l| l.key().into()).collect(),
            self.candidate_index,
            self.passage_ids.clone(),
        )
    }

    /// Single-passage path with a null intermediate.
    pub fn is_null(&self) -> bool {
        self.links.is_empty()
    }

    /// Surfaces along the path: head, intermediates, tail.
    pub fn entity_chain(&self) -> Vec<&str> {
        let mut chain = alloc::vec![self.head.surface.as_str()];
        chain.extend(self.links.iter().map(|l| l.source.surface.as_str()));
        chain.push(&self.tail.surface);
        chain
    }
}

/// Greedy left-to-right occurrences of a lowercase token sequence.
pub fn key_occurrences(passage: &Passage, key: &str) -> Vec<MentionSpan> {
    let pattern: Vec<&str> = key.split(' ').filter(|s| !s.is_empty()).collect();
    let n = pattern.len();
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut i = 0;
    while i + n <= passage.tokens.len() {
        if passage.tokens[i..i + n].iter().zip(&pattern).all(|(t, p)| t.lowercase == *p) {
            let surface = passage.tokens[i..i + n]
                .iter()
                .map(|t| t.text.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            out.push(MentionSpan {
                passage_id: passage.id,
                start: i,
                end: i + n - 1,
                surface,
                entity_key: String::from(key),
            });
            i += n;
        } else {
            i += 1;
        }
    }
    out
}

/// Chunked entities in the anchor's sentence or the next one, other than the
/// anchor itself, one per key, earliest first, at most `limit`.
pub fn neighbor_entities(passage: &Passage, anchor: &MentionSpan, limit: usize) -> Vec<MentionSpan> {
    let Some(sentence) = passage.sentence_of(anchor.start) else {
        return Vec::new();
    };
    let mut seen = BTreeSet::new();
    chunk_spans(passage)
        .into_iter()
        .filter(|s| {
            passage
                .sentence_of(s.start)
                .is_some_and(|k| k == sentence || k == sentence + 1)
        })
        .filter(|s| s.entity_key != anchor.entity_key && !s.overlaps(anchor))
        .filter(|s| seen.insert(s.entity_key.clone()))
        .take(limit)
        .collect()
}

struct Occurrences<'a> {
    passages: &'a [Passage],
    cache: BTreeMap<String, Vec<(usize, Vec<MentionSpan>)>>,
}

impl<'a> Occurrences<'a> {
    fn new(passages: &'a [Passage]) -> Self {
        Self {
            passages,
            cache: BTreeMap::new(),
        }
    }

    /// `(passage position, occurrences)` for every passage mentioning `key`.
    fn of(&mut self, key: &str) -> &[(usize, Vec<MentionSpan>)] {
        if !self.cache.contains_key(key) {
            let hits = self
                .passages
                .iter()
                .enumerate()
                .filter_map(|(pid, p)| {
                    let occ = key_occurrences(p, key);
                    (!occ.is_empty()).then_some((pid, occ))
                })
                .collect();
            self.cache.insert(String::from(key), hits);
        }
        &self.cache[key]
    }

    fn in_passage(&mut self, key: &str, pid: usize) -> Vec<MentionSpan> {
        self.of(key)
            .iter()
            .find(|(p, _)| *p == pid)
            .map(|(_, occ)| occ.clone())
            .unwrap_or_default()
    }
}

struct Frontier {
    head: MentionSpan,
    links: Vec<Link>,
    passages: Vec<usize>,
    /// Mentions of the entity the path currently stands on, in the last passage.
    anchors: Vec<MentionSpan>,
}

fn unique_keys<S: AsRef<str>>(strings: &[S]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    strings
        .iter()
        .map(|s| entity_key(s.as_ref()))
        .filter(|k| !k.is_empty() && seen.insert(k.clone()))
        .collect()
}

/// Enumerates every path of 1..=`max_hops` passages from a head entity to a
/// candidate, deduplicated, ordered by candidate, hop count and passages,
/// and capped per candidate.
pub fn extract_paths(instance: &QuestionInstance, config: &ExtractionConfig) -> Vec<Path> {
    let heads = unique_keys(&instance.head_entities);
    let tails: Vec<Vec<String>> = instance.tail_entities.iter().map(|t| unique_keys(t)).collect();
    let mut occ = Occurrences::new(&instance.passages);
    let mut out = Vec::new();

    let mut stack = Vec::new();
    for (pid, _) in instance.passages.iter().enumerate().rev() {
        for head in heads.iter().rev() {
            let anchors = occ.in_passage(head, pid);
            if let Some(first) = anchors.first() {
                stack.push(Frontier {
                    head: first.clone(),
                    links: Vec::new(),
                    passages: alloc::vec![pid],
                    anchors,
                });
            }
        }
    }

    while let Some(state) = stack.pop() {
        let here = *state.passages.last().expect("non-empty");
        let standing_on = state.anchors[0].entity_key.clone();
        for (k, tail_keys) in tails.iter().enumerate() {
            for tail_key in tail_keys {
                if *tail_key == state.head.entity_key || *tail_key == standing_on {
                    continue;
                }
                let tail = occ
                    .in_passage(tail_key, here)
                    .into_iter()
                    .find(|t| !state.anchors.iter().any(|a| a.overlaps(t)));
                if let Some(tail) = tail {
                    out.push(Path {
                        head: state.head.clone(),
                        links: state.links.clone(),
                        tail,
                        passage_ids: state.passages.clone(),
                        candidate_index: k,
                        hop_count: state.passages.len(),
                    });
                }
            }
        }
        if state.passages.len() >= config.max_hops {
            continue;
        }
        let on_path: BTreeSet<&str> = core::iter::once(state.head.entity_key.as_str())
            .chain(state.links.iter().map(Link::key))
            .collect();
        let mut seen = BTreeSet::new();
        let mut neighbors = Vec::new();
        for anchor in &state.anchors {
            for n in neighbor_entities(&instance.passages[here], anchor, config.max_neighbors) {
                if !on_path.contains(n.entity_key.as_str()) && seen.insert(n.entity_key.clone()) {
                    neighbors.push(n);
                }
            }
        }
        let mut next = Vec::new();
        for n in neighbors {
            let targets: Vec<(usize, Vec<MentionSpan>)> = occ
                .of(&n.entity_key)
                .iter()
                .filter(|(p, _)| !state.passages.contains(p))
                .take(config.max_passages_per_entity)
                .cloned()
                .collect();
            for (pid, anchors) in targets {
                let mut links = state.links.clone();
                links.push(Link {
                    source: n.clone(),
                    target: anchors[0].clone(),
                });
                let mut passages = state.passages.clone();
                passages.push(pid);
                next.push(Frontier {
                    head: state.head.clone(),
                    links,
                    passages,
                    anchors,
                });
            }
        }
        stack.extend(next.into_iter().rev());
    }

    let mut paths = dedupe_paths(out);
    paths.sort_by(|a, b| order_key(a).cmp(&order_key(b)));
    cap_per_candidate(paths, config.max_paths_per_candidate)
}

fn order_key(p: &Path) -> (usize, usize, &[usize], &str, Vec<&str>) {
    (
        p.candidate_index,
        p.hop_count,
        &p.passage_ids,
        &p.head.entity_key,
        p.links.iter().map(Link::key).collect(),
    )
}

fn cap_per_candidate(paths: Vec<Path>, cap: usize) -> Vec<Path> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    paths
        .into_iter()
        .filter(|p| {
            let n = counts.entry(p.candidate_index).or_default();
            *n += 1;
            *n <= cap
        })
        .collect()
}

/// Keeps the first path for each [`PathKey`], preserving order.
pub fn dedupe_paths(paths: Vec<Path>) -> Vec<Path> {
    let mut seen = BTreeSet::new();
    paths.into_iter().filter(|p| seen.insert(p.key())).collect()
}

/// Number of paths per candidate.
pub fn paths_per_candidate(paths: &[Path], num_candidates: usize) -> Vec<usize> {
    let mut counts = alloc::vec![0; num_candidates];
    for p in paths {
        counts[p.candidate_index] += 1;
    }
    counts
}
