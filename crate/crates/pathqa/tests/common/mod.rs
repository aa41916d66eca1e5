//! Brute-force oracles and random fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use pathqa_core::instance::QuestionInstance;
use pathqa_core::paths::PathKey;
use pathqa_core::retrieval::content_terms;
use pathqa_core::rng::Rng;
use pathqa_core::text::{chunk_spans, tokenize, Passage};

const NAMES: &[&str] = &[
    "Alma Rook", "Dunmore", "Vessia", "Quell", "Tor Ansel", "Brin", "Oska", "Lune", "Pell Marsh",
];
const WORDS: &[&str] = &["river", "city", "stone", "bridge", "market", "old", "north", "harbor"];
const FILLER: &[&str] = &["the", "of", "in", "and", "is", "near", "to", "a", "was"];

/// Token spans `(start, end)` of `key` in `passage`, matched left to right
/// without overlap.
pub fn occurrences(passage: &Passage, key: &str) -> Vec<(usize, usize)> {
    let words: Vec<&str> = key.split(' ').collect();
    let toks: Vec<&str> = passage.tokens.iter().map(|t| t.lowercase.as_str()).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i + words.len() <= toks.len() {
        if toks[i..i + words.len()] == words[..] {
            out.push((i, i + words.len() - 1));
            i += words.len();
        } else {
            i += 1;
        }
    }
    out
}

fn overlap(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

fn lower_key(s: &str) -> String {
    tokenize(s).iter().map(|t| t.lowercase.clone()).collect::<Vec<_>>().join(" ")
}

fn keys(strings: &[String]) -> BTreeSet<String> {
    strings.iter().map(|s| lower_key(s)).filter(|k| !k.is_empty()).collect()
}

/// Every path of at most two passages, by exhaustive enumeration.
///
/// One passage: a head and a candidate tail co-occur without overlapping.
/// Two passages: some head occurrence in `p1` has a chunked neighbour in its
/// sentence or the next (not overlapping it, different key); the neighbour's
/// key occurs in a different passage `p2`, where a candidate tail occurs
/// clear of every occurrence of the neighbour.
pub fn brute_force_paths(instance: &QuestionInstance, max_hops: usize) -> BTreeSet<PathKey> {
    let heads = keys(&instance.head_entities);
    let tails: Vec<BTreeSet<String>> = instance.tail_entities.iter().map(|t| keys(t)).collect();
    let mut out = BTreeSet::new();
    let ends_in = |p: usize, standing: &str, head: &str, clear_of: &[(usize, usize)], out: &mut Vec<usize>| {
        for (k, tk) in tails.iter().enumerate() {
            for t in tk {
                if t == head || t == standing {
                    continue;
                }
                let hit = occurrences(&instance.passages[p], t)
                    .into_iter()
                    .any(|o| clear_of.iter().all(|&a| !overlap(o, a)));
                if hit {
                    out.push(k);
                }
            }
        }
    };
    for (p1, passage) in instance.passages.iter().enumerate() {
        for h in &heads {
            let anchors = occurrences(passage, h);
            if anchors.is_empty() {
                continue;
            }
            let mut ks = Vec::new();
            ends_in(p1, h, h, &anchors, &mut ks);
            for k in ks {
                out.insert((h.clone(), vec![], k, vec![p1]));
            }
            if max_hops < 2 {
                continue;
            }
            let mut neighbours = BTreeSet::new();
            for &a in &anchors {
                let sent = passage.sentences.iter().position(|r| r.contains(&a.0)).unwrap();
                for s in chunk_spans(passage) {
                    let ss = passage.sentences.iter().position(|r| r.contains(&s.start)).unwrap();
                    if (ss == sent || ss == sent + 1) && s.entity_key != *h && !overlap((s.start, s.end), a) {
                        neighbours.insert(s.entity_key.clone());
                    }
                }
            }
            for n in &neighbours {
                for (p2, second) in instance.passages.iter().enumerate() {
                    if p2 == p1 {
                        continue;
                    }
                    let n_occ = occurrences(second, n);
                    if n_occ.is_empty() {
                        continue;
                    }
                    let mut ks = Vec::new();
                    ends_in(p2, n, h, &n_occ, &mut ks);
                    for k in ks {
                        out.insert((h.clone(), vec![n.clone()], k, vec![p1, p2]));
                    }
                }
            }
        }
    }
    out
}

fn sentence(rng: &mut Rng, names: &[&str]) -> String {
    let len = 3 + rng.below(6);
    let mut words = Vec::new();
    for _ in 0..len {
        let w = match rng.below(10) {
            0..=2 => *rng.choose(names),
            3..=5 => *rng.choose(WORDS),
            _ => *rng.choose(FILLER),
        };
        words.push(w);
    }
    format!("{} .", words.join(" "))
}

/// Random instance with at most 8 passages of at most 40 tokens.
pub fn random_instance(id: usize, rng: &mut Rng) -> QuestionInstance {
    let names: Vec<&str> = {
        let mut all = NAMES.to_vec();
        rng.shuffle(&mut all);
        all.truncate(4 + rng.below(4));
        all
    };
    let passages: Vec<Passage> = (0..1 + rng.below(8))
        .map(|pid| {
            let mut sentences = Vec::new();
            let mut tokens = 0;
            for _ in 0..1 + rng.below(4) {
                let s = sentence(rng, &names);
                let n = tokenize(&s).len();
                if tokens + n > 40 {
                    break;
                }
                tokens += n;
                sentences.push(s);
            }
            Passage::from_sentences(pid, &sentences)
        })
        .collect();
    let head = names[0].to_string();
    let mut pool: Vec<String> = names[1..].iter().map(|s| s.to_string()).collect();
    pool.push(rng.choose(WORDS).to_string());
    rng.shuffle(&mut pool);
    pool.dedup();
    pool.truncate(2 + rng.below(3));
    let answer = Some(rng.below(pool.len()));
    QuestionInstance::new(format!("r{id}"), &format!("located in {head}"), vec![head], &pool, passages, answer)
        .expect("valid instance")
}

/// Toy corpus over a small vocabulary so that sentences overlap often.
pub fn toy_corpus(n: usize, seed: u64) -> Vec<String> {
    const VOCAB: &[&str] = &[
        "plants", "sunlight", "energy", "animals", "food", "water", "heat", "metal", "conducts", "electricity",
        "rocks", "erosion", "wind", "rain", "soil", "roots", "leaves", "oxygen", "carbon", "cells", "seeds",
        "birds", "migrate", "winter", "summer", "ice", "melts", "steam", "clouds", "gravity",
    ];
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| {
            let mut words = vec![*rng.choose(VOCAB)];
            for _ in 0..2 + rng.below(5) {
                words.push(if rng.below(3) == 0 { *rng.choose(FILLER) } else { *rng.choose(VOCAB) });
            }
            format!("{} .", words.join(" "))
        })
        .collect()
}

/// One brute-force chain: `(s1, s2, score, q·s1, s1·s2, s2·c)`.
pub type OracleChain = (usize, usize, f64, f64, f64, f64);

/// All sentence pairs scored with the idf overlap product, filtered by the
/// threshold, sorted by score then ids, cut to `top_k`.
pub fn brute_force_chains(corpus: &[String], question: &str, candidate: &str, threshold: f64, top_k: usize) -> Vec<OracleChain> {
    let terms: Vec<BTreeSet<String>> = corpus
        .iter()
        .map(|s| content_terms(&tokenize(s)).into_iter().collect())
        .collect();
    let n = corpus.len() as f64;
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &terms {
        for w in t {
            *df.entry(w.as_str()).or_default() += 1;
        }
    }
    let idf = |w: &str| match df.get(w) {
        Some(&d) => (n / d as f64).ln(),
        None => n.ln(),
    };
    let sim = |x: &BTreeSet<String>, y: &BTreeSet<String>| {
        let wx: f64 = x.iter().map(|w| idf(w)).sum();
        let wy: f64 = y.iter().map(|w| idf(w)).sum();
        let d = wx.min(wy);
        if d <= 0.0 {
            return 0.0;
        }
        x.intersection(y).map(|w| idf(w)).sum::<f64>() / d
    };
    let q: BTreeSet<String> = content_terms(&tokenize(question)).into_iter().collect();
    let c: BTreeSet<String> = content_terms(&tokenize(candidate)).into_iter().collect();
    let mut out = Vec::new();
    for (i, s1) in terms.iter().enumerate() {
        let a = sim(&q, s1);
        for (j, s2) in terms.iter().enumerate() {
            if i == j {
                continue;
            }
            let b = sim(s1, s2);
            let cc = sim(s2, &c);
            let score = a * b * cc;
            if score > 0.0 && score >= threshold {
                out.push((i, j, score, a, b, cc));
            }
        }
    }
    out.sort_by(|x, y| y.2.partial_cmp(&x.2).unwrap().then((x.0, x.1).cmp(&(y.0, y.1))));
    out.truncate(top_k);
    out
}
