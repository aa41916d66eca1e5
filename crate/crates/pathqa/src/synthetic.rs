//! Synthetic relation-composition data in the entity-query record format.
//!
//! A rule set assigns every relation pair `(a, b)` to one query relation.
//! With two hops an instance is a head `E1`, a gold chain `E1 -a-> E2 -b-> E3`
//! whose pair belongs to the query relation, and distractor chains
//! `E1 -c-> M -d-> C` whose pairs belong to other query relations. Each link
//! is one templated sentence, "E1 <phrase of a> E2 .", with the phrase drawn
//! from a few paraphrases made only of stopwords, so the chunker sees nothing
//! but the entity names. With one hop the query relations are a permutation
//! of the base relations and every candidate sits in one sentence with the
//! head.
//!
//! Entity names are invented and stay out of any vector file, as rare names
//! do in real data. The relation and query words get vectors from
//! [`word_vectors`], standing in for pretrained embeddings of common words.

use std::collections::BTreeSet;

use pathqa_core::embedding::EmbeddingRecord;
use pathqa_core::paths::{extract_paths, ExtractionConfig};
use pathqa_core::rng::Rng;
use pathqa_core::stopwords::is_stopword;
use serde::{Deserialize, Serialize};

use crate::dataset::{entity_query_instance, EntityQueryRecord, Query, Support};
use crate::error::{Error, Result};

pub const RELATION_PHRASES: [[&str; 3]; 8] = [
    ["is above", "was over", "is up on"],
    ["is below", "was under", "is down under"],
    ["is near", "was beside", "is by"],
    ["is within", "was in", "is into"],
    ["is behind", "was after", "is beyond"],
    ["is before", "was toward", "is against"],
    ["is between", "was among", "is along"],
    ["is across", "was through", "is via"],
];

pub const QUERY_RELATIONS: [&str; 8] = [
    "direction_north",
    "direction_south",
    "direction_east",
    "direction_west",
    "direction_upper",
    "direction_lower",
    "direction_inner",
    "direction_outer",
];

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 6] = ["", "n", "r", "l", "s", "k"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Size of the entity word pool.
    pub entities: usize,
    /// Base relations, at most 8.
    pub relations: usize,
    /// 1 or 2.
    pub hops: usize,
    pub candidates: usize,
    /// Words per entity name, 1 or 2.
    pub max_name_words: usize,
    /// Phrasings used per relation, at most 3.
    pub paraphrases: usize,
    pub train: usize,
    pub dev: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            entities: 12,
            relations: 4,
            hops: 2,
            candidates: 4,
            max_name_words: 1,
            paraphrases: 1,
            train: 500,
            dev: 100,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.relations < 2 || self.relations > RELATION_PHRASES.len() {
            return fail(format!("relations must lie in 2..={}", RELATION_PHRASES.len()));
        }
        if !(1..=2).contains(&self.hops) {
            return fail("hops must be 1 or 2".into());
        }
        if !(1..=2).contains(&self.max_name_words) {
            return fail("max_name_words must be 1 or 2".into());
        }
        if !(1..=3).contains(&self.paraphrases) {
            return fail("paraphrases must lie in 1..=3".into());
        }
        if self.candidates < 2 {
            return fail("at least two candidates are needed".into());
        }
        if self.train + self.dev == 0 {
            return fail("no instances requested".into());
        }
        let words = (1 + self.candidates * self.hops) * self.max_name_words;
        if self.entities < words {
            return fail(format!("entities must be at least {words}"));
        }
        Ok(())
    }
}

/// The sampled composition rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    /// `classes[q]` lists the relation sequences that answer query relation `q`.
    pub classes: Vec<Vec<Vec<usize>>>,
}

impl RuleSet {
    fn sample(relations: usize, hops: usize, rng: &mut Rng) -> Self {
        let mut seqs: Vec<Vec<usize>> = if hops == 1 {
            (0..relations).map(|a| vec![a]).collect()
        } else {
            (0..relations).flat_map(|a| (0..relations).map(move |b| vec![a, b])).collect()
        };
        rng.shuffle(&mut seqs);
        let per_class = seqs.len() / relations;
        Self {
            classes: seqs.chunks(per_class).map(<[_]>::to_vec).collect(),
        }
    }

    pub fn class_of(&self, seq: &[usize]) -> Option<usize> {
        self.classes.iter().position(|c| c.iter().any(|s| s == seq))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub rules: RuleSet,
    pub train: Vec<EntityQueryRecord>,
    pub dev: Vec<EntityQueryRecord>,
}

fn entity_pool(n: usize, rng: &mut Rng) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = 2 + rng.below(2);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(rng.choose(&ONSETS));
            w.push_str(rng.choose(&VOWELS));
        }
        w.push_str(rng.choose(&CODAS));
        if is_stopword(&w) || !seen.insert(w.clone()) {
            continue;
        }
        let mut chars = w.chars();
        let first = chars.next().expect("non-empty").to_ascii_uppercase();
        out.push(std::iter::once(first).chain(chars).collect());
    }
    out
}

/// Draws names of up to `max_words` pool words; no word appears in two names.
fn draw_names(pool: &[String], count: usize, max_words: usize, rng: &mut Rng) -> Vec<String> {
    let mut words: Vec<&String> = pool.iter().collect();
    rng.shuffle(&mut words);
    let mut words = words.into_iter();
    (0..count)
        .map(|_| {
            let first = words.next().expect("pool checked by validate");
            if max_words == 1 || rng.below(2) == 0 {
                first.clone()
            } else {
                match words.next() {
                    Some(second) => format!("{first} {second}"),
                    None => first.clone(),
                }
            }
        })
        .collect()
}

fn sentence(from: &str, relation: usize, to: &str, paraphrases: usize, rng: &mut Rng) -> String {
    format!("{from} {} {to} .", rng.choose(&RELATION_PHRASES[relation][..paraphrases]))
}

fn instance(config: &SyntheticConfig, rules: &RuleSet, pool: &[String], id: String, rng: &mut Rng) -> EntityQueryRecord {
    let r = config.relations;
    let q = rng.below(rules.classes.len());
    let gold = rng.choose(&rules.classes[q]).clone();
    let mut wrong: Vec<Vec<usize>> = rules
        .classes
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != q)
        .flat_map(|(_, seqs)| seqs.iter().cloned())
        .collect();
    rng.shuffle(&mut wrong);
    let mut chains = vec![gold];
    for j in 0..config.candidates - 1 {
        // Distinct distractor sequences while they last.
        let seq = if j < wrong.len() {
            wrong[j].clone()
        } else {
            rng.choose(&wrong).clone()
        };
        chains.push(seq);
    }
    debug_assert!(chains.iter().all(|c| c.iter().all(|&a| a < r)));

    let names = draw_names(pool, 1 + config.candidates * config.hops, config.max_name_words, rng);
    let head = &names[0];
    let mut supports = Vec::new();
    let mut candidates = Vec::new();
    for (j, chain) in chains.iter().enumerate() {
        let own = &names[1 + j * config.hops..1 + (j + 1) * config.hops];
        let mut from = head;
        for (rel, to) in chain.iter().zip(own) {
            supports.push(Support::Text(sentence(from, *rel, to, config.paraphrases, rng)));
            from = to;
        }
        candidates.push(own[config.hops - 1].clone());
    }
    let answer = candidates[0].clone();
    rng.shuffle(&mut supports);
    rng.shuffle(&mut candidates);
    EntityQueryRecord {
        id,
        query: Query::Text(format!("{} {head}", QUERY_RELATIONS[q])),
        candidates,
        supports,
        answer: Some(answer),
    }
}

/// Half-width of the uniform range of [`word_vectors`] entries.
pub const VECTOR_SCALE: f64 = 2.0;

/// Every word the generator writes apart from entity names, lowercased.
pub fn closed_vocabulary() -> BTreeSet<String> {
    RELATION_PHRASES
        .iter()
        .flatten()
        .chain(QUERY_RELATIONS.iter())
        .flat_map(|p| p.split([' ', '_']))
        .chain(["."])
        .map(str::to_lowercase)
        .collect()
}

/// Seeded stand-in vectors for [`closed_vocabulary`].
pub fn word_vectors(config: &SyntheticConfig, dim: usize) -> Vec<EmbeddingRecord> {
    let mut rng = Rng::derived(config.seed, "vectors");
    closed_vocabulary()
        .into_iter()
        .map(|word| EmbeddingRecord {
            word,
            values: (0..dim).map(|_| rng.uniform(-VECTOR_SCALE, VECTOR_SCALE)).collect(),
        })
        .collect()
}

/// Checks that path extraction finds a path of `hops` passages to the answer.
pub fn has_gold_path(record: &EntityQueryRecord, hops: usize) -> Result<bool> {
    let Some(inst) = entity_query_instance(record)? else {
        return Ok(false);
    };
    let answer = inst.answer_index;
    Ok(extract_paths(&inst, &ExtractionConfig::default())
        .iter()
        .any(|p| Some(p.candidate_index) == answer && p.hop_count == hops))
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = Rng::derived(config.seed, "synthetic");
    let rules = RuleSet::sample(config.relations, config.hops, &mut rng);
    let pool = entity_pool(config.entities, &mut rng);
    let mut make = |split: &str, n: usize| -> Result<Vec<EntityQueryRecord>> {
        (0..n)
            .map(|i| {
                let rec = instance(config, &rules, &pool, format!("{split}-{i}"), &mut rng);
                if !has_gold_path(&rec, config.hops)? {
                    return Err(Error::Config(format!("generated instance `{}` has no gold path", rec.id)));
                }
                Ok(rec)
            })
            .collect()
    };
    let train = make("train", config.train)?;
    let dev = make("dev", config.dev)?;
    Ok(SyntheticData { rules, train, dev })
}
