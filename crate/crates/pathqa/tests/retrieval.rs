mod common;

use common::{brute_force_chains, toy_corpus};
use pathqa_core::retrieval::{idf_overlap, retrieve_chains, IdfIndex, RetrievalConfig};
use pathqa_core::text::tokenize;
use proptest::prelude::*;

const QUESTIONS: &[(&str, &str)] = &[
    ("What gives plants energy?", "sunlight"),
    ("Why does ice melt in summer?", "heat"),
    ("How do rocks change over time?", "wind erosion"),
    ("What do roots take from soil?", "water"),
    ("Which animals migrate in winter?", "birds"),
];

fn full_beam(n: usize) -> RetrievalConfig {
    RetrievalConfig { beam: n, ..RetrievalConfig::default() }
}

#[test]
fn full_beam_matches_enumeration() {
    let corpus = toy_corpus(120, 5);
    let index = IdfIndex::from_texts(&corpus).unwrap();
    let mut total = 0;
    for &(q, c) in QUESTIONS {
        let got = retrieve_chains(&tokenize(q), &tokenize(c), &index, &full_beam(corpus.len()));
        let want = brute_force_chains(&corpus, q, c, 0.08, 100);
        assert_eq!(got.len(), want.len(), "{q}");
        for (g, w) in got.iter().zip(&want) {
            assert_eq!((g.s1_id, g.s2_id), (w.0, w.1));
            assert!((g.score - w.2).abs() < 1e-9);
            assert!((g.question_s1 - w.3).abs() < 1e-9);
            assert!((g.s1_s2 - w.4).abs() < 1e-9);
            assert!((g.s2_candidate - w.5).abs() < 1e-9);
        }
        total += got.len();
    }
    assert!(total > 0);
}

#[test]
fn prefix_pruning_never_changes_a_full_beam_result() {
    let corpus = toy_corpus(80, 9);
    let index = IdfIndex::from_texts(&corpus).unwrap();
    for &(q, c) in QUESTIONS {
        let (q, c) = (tokenize(q), tokenize(c));
        let pruned = retrieve_chains(&q, &c, &index, &full_beam(80));
        let open = retrieve_chains(&q, &c, &index, &RetrievalConfig { prune_prefix: false, ..full_beam(80) });
        assert_eq!(pruned, open);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wider_beams_only_add(seed in 0u64..1000, beam in 1usize..20, extra in 1usize..40, qi in 0usize..5) {
        let corpus = toy_corpus(60, seed);
        let index = IdfIndex::from_texts(&corpus).unwrap();
        let (q, c) = (tokenize(QUESTIONS[qi].0), tokenize(QUESTIONS[qi].1));
        let config = RetrievalConfig { top_k: usize::MAX, beam, ..RetrievalConfig::default() };
        let narrow = retrieve_chains(&q, &c, &index, &config);
        let wide = retrieve_chains(&q, &c, &index, &RetrievalConfig { beam: beam + extra, ..config });
        for ch in &narrow {
            let found = wide.iter().find(|w| (w.s1_id, w.s2_id) == (ch.s1_id, ch.s2_id));
            prop_assert!(found.is_some_and(|w| w.score >= ch.score));
        }
    }

    #[test]
    fn chains_are_sorted_products_in_unit_interval(seed in 0u64..1000, qi in 0usize..5, threshold in 0.01f64..0.5) {
        let corpus = toy_corpus(60, seed);
        let index = IdfIndex::from_texts(&corpus).unwrap();
        let (q, c) = (tokenize(QUESTIONS[qi].0), tokenize(QUESTIONS[qi].1));
        let chains = retrieve_chains(&q, &c, &index, &RetrievalConfig { threshold, ..full_beam(60) });
        for ch in &chains {
            prop_assert!(ch.score > 0.0 && ch.score <= 1.0 && ch.score >= threshold);
            prop_assert_eq!(ch.score, ch.question_s1 * ch.s1_s2 * ch.s2_candidate);
            prop_assert!(ch.question_s1 >= threshold && ch.question_s1 * ch.s1_s2 >= threshold);
        }
        for w in chains.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && (w[0].s1_id, w[0].s2_id) < (w[1].s1_id, w[1].s2_id)));
        }
    }

    #[test]
    fn overlap_is_symmetric(seed in 0u64..1000, i in 0usize..40, j in 0usize..40) {
        let corpus = toy_corpus(40, seed);
        let index = IdfIndex::from_texts(&corpus).unwrap();
        let (x, y) = (tokenize(&corpus[i]), tokenize(&corpus[j]));
        let a = idf_overlap(&x, &y, &index);
        prop_assert_eq!(a, idf_overlap(&y, &x, &index));
        prop_assert!((0.0..=1.0).contains(&a));
    }
}
