//! Tokenization, sentence segmentation, mention matching and the heuristic
//! entity chunker.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::stopwords::{is_name_connector, is_stopword};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub lowercase: String,
    /// Byte offset of the token in the text it was cut from.
    pub offset: usize,
}

impl Token {
    pub fn new(text: &str, offset: usize) -> Self {
        Self {
            text: text.to_string(),
            lowercase: text.to_lowercase(),
            offset,
        }
    }

    pub fn is_word(&self) -> bool {
        self.text.chars().any(char::is_alphanumeric)
    }

    pub fn is_capitalized(&self) -> bool {
        self.text.chars().next().is_some_and(char::is_uppercase)
    }
}

/// Words whose trailing period belongs to the word rather than ending a sentence.
const ABBREVIATIONS: [&str; 22] = [
    "co", "corp", "dept", "dr", "e.g", "est", "etc", "fig", "gen", "i.e", "inc", "jr", "lt", "ltd",
    "mr", "mrs", "ms", "mt", "no", "prof", "sr", "st",
];

const CLITICS: [&str; 7] = ["s", "t", "re", "ll", "d", "ve", "m"];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits text into word and punctuation tokens.
///
/// Words are runs of alphanumerics (and `_`). Punctuation characters become
/// single tokens, except: dotted abbreviations (`U.K.`, `e.g.`), listed
/// abbreviations (`Mr.`), decimals and digit groups (`3.5`, `1,000`), and
/// English clitics (`'s`), which are kept whole.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let end_of = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if is_word_char(c) {
            let mut j = i;
            loop {
                while j < chars.len() && is_word_char(chars[j].1) {
                    j += 1;
                }
                // 3.5, 1,000
                let joins_digits = j + 1 < chars.len()
                    && matches!(chars[j].1, '.' | ',')
                    && chars[j - 1].1.is_ascii_digit()
                    && chars[j + 1].1.is_ascii_digit();
                if joins_digits {
                    j += 1;
                    continue;
                }
                break;
            }
            // Dotted abbreviation: single letters each followed by a period.
            if j - i == 1 && chars[i].1.is_alphabetic() && chars.get(j).is_some_and(|&(_, c)| c == '.') {
                let mut k = j;
                let mut letters = 1;
                while k + 2 < chars.len() && chars[k].1 == '.' && chars[k + 1].1.is_alphabetic() {
                    let after = chars.get(k + 2).map(|&(_, c)| c);
                    if after == Some('.') {
                        letters += 1;
                        k += 2;
                    } else {
                        break;
                    }
                }
                if letters >= 2 {
                    let stop = k + 1;
                    tokens.push(Token::new(&text[start..end_of(stop)], start));
                    i = stop;
                    continue;
                }
            }
            let word = &text[start..end_of(j)];
            if chars.get(j).is_some_and(|&(_, c)| c == '.')
                && ABBREVIATIONS.contains(&word.to_lowercase().as_str())
            {
                tokens.push(Token::new(&text[start..end_of(j + 1)], start));
                i = j + 1;
                continue;
            }
            tokens.push(Token::new(word, start));
            i = j;
            continue;
        }
        if c == '\'' || c == '\u{2019}' {
            let mut j = i + 1;
            while j < chars.len() && chars[j].1.is_alphabetic() {
                j += 1;
            }
            let tail = &text[end_of(i + 1)..end_of(j)];
            let attached = i > 0 && is_word_char(chars[i - 1].1);
            let bounded = j == chars.len() || !is_word_char(chars[j].1);
            if attached && bounded && CLITICS.contains(&tail.to_lowercase().as_str()) {
                tokens.push(Token::new(&text[start..end_of(j)], start));
                i = j;
                continue;
            }
        }
        tokens.push(Token::new(&text[start..end_of(i + 1)], start));
        i += 1;
    }
    tokens
}

fn is_terminal(token: &Token) -> bool {
    matches!(token.text.as_str(), "." | "!" | "?")
}

fn is_closer(token: &Token) -> bool {
    matches!(token.text.as_str(), "\"" | "'" | ")" | "]" | "\u{201d}" | "\u{2019}")
}

/// Sentence ranges over `tokens`, partitioning `0..tokens.len()`.
///
/// A sentence ends after a run of `.`, `!` or `?` tokens (plus any closing
/// quotes or brackets). Abbreviation periods never reach this point as
/// standalone tokens, so they do not split.
pub fn segment_sentences(tokens: &[Token]) -> Vec<Range<usize>> {
    let mut ranges = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < tokens.len() {
        if is_terminal(&tokens[i]) {
            let mut end = i + 1;
            while end < tokens.len() && is_terminal(&tokens[end]) {
                end += 1;
            }
            while end < tokens.len() && is_closer(&tokens[end]) {
                end += 1;
            }
            ranges.push(start..end);
            start = end;
            i = end;
        } else {
            i += 1;
        }
    }
    if start < tokens.len() {
        ranges.push(start..tokens.len());
    }
    ranges
}

/// Case-folded, whitespace-normalized form used to link mentions.
pub fn entity_key(surface: &str) -> String {
    key_of(&tokenize(surface))
}

fn key_of(tokens: &[Token]) -> String {
    let mut key = String::new();
    for (n, t) in tokens.iter().enumerate() {
        if n > 0 {
            key.push(' ');
        }
        key.push_str(&t.lowercase);
    }
    key
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: usize,
    pub text: String,
    pub tokens: Vec<Token>,
    pub sentences: Vec<Range<usize>>,
    /// Pre-annotated entity surfaces; when present they replace the chunker.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotated_entities: Option<Vec<String>>,
}

impl Passage {
    pub fn new(id: usize, text: &str) -> Self {
        let tokens = tokenize(text);
        let sentences = segment_sentences(&tokens);
        Self {
            id,
            text: text.to_string(),
            tokens,
            sentences,
            annotated_entities: None,
        }
    }

    /// Builds a passage from sentences that were segmented upstream; their
    /// boundaries are kept as given.
    pub fn from_sentences<S: AsRef<str>>(id: usize, sentences: &[S]) -> Self {
        let mut text = String::new();
        let mut tokens = Vec::new();
        let mut ranges = Vec::new();
        for s in sentences {
            let s = s.as_ref();
            if !text.is_empty() {
                text.push(' ');
            }
            let base = text.len();
            text.push_str(s);
            let start = tokens.len();
            tokens.extend(tokenize(s).into_iter().map(|mut t| {
                t.offset += base;
                t
            }));
            if tokens.len() > start {
                ranges.push(start..tokens.len());
            }
        }
        Self {
            id,
            text,
            tokens,
            sentences: ranges,
            annotated_entities: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of the sentence containing token `index`.
    pub fn sentence_of(&self, index: usize) -> Option<usize> {
        self.sentences.iter().position(|r| r.contains(&index))
    }

    fn span(&self, start: usize, end: usize) -> MentionSpan {
        let surface = self.tokens[start..=end]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        MentionSpan {
            passage_id: self.id,
            start,
            end,
            surface,
            entity_key: key_of(&self.tokens[start..=end]),
        }
    }
}

/// A token span `start..=end` inside one passage.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MentionSpan {
    pub passage_id: usize,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub entity_key: String,
}

impl MentionSpan {
    pub fn overlaps(&self, other: &MentionSpan) -> bool {
        self.passage_id == other.passage_id && self.start <= other.end && other.start <= self.end
    }
}

/// All case-insensitive token-sequence matches of each entity string.
///
/// Matches of one entity are taken greedily left to right, so overlapping
/// occurrences collapse to the first. Output is sorted by position.
pub fn find_mentions<S: AsRef<str>>(passage: &Passage, entities: &[S]) -> Vec<MentionSpan> {
    let mut seen_keys = BTreeSet::new();
    let mut spans = Vec::new();
    for entity in entities {
        let pattern: Vec<String> = tokenize(entity.as_ref()).into_iter().map(|t| t.lowercase).collect();
        if pattern.is_empty() || !seen_keys.insert(pattern.clone()) {
            continue;
        }
        let n = pattern.len();
        let mut i = 0;
        while i + n <= passage.tokens.len() {
            let hit = passage.tokens[i..i + n]
                .iter()
                .zip(&pattern)
                .all(|(t, p)| t.lowercase == *p);
            if hit {
                spans.push(passage.span(i, i + n - 1));
                i += n;
            } else {
                i += 1;
            }
        }
    }
    spans.sort_by_key(|s| (s.start, s.end));
    spans
}

const MAX_NGRAM: usize = 4;

/// Every span proposed by the chunker (or the annotation), in position order,
/// one per occurrence.
pub fn chunk_spans(passage: &Passage) -> Vec<MentionSpan> {
    if let Some(annotated) = &passage.annotated_entities {
        return find_mentions(passage, annotated);
    }
    let mut spans = Vec::new();
    for range in &passage.sentences {
        capitalized_runs(passage, range.clone(), &mut spans);
        content_ngrams(passage, range.clone(), &mut spans);
    }
    spans.sort_by_key(|s| (s.start, s.end));
    spans.dedup_by(|a, b| a.start == b.start && a.end == b.end);
    spans
}

fn capitalized_runs(passage: &Passage, range: Range<usize>, out: &mut Vec<MentionSpan>) {
    let toks = &passage.tokens;
    let mut i = range.start;
    while i < range.end {
        if !(toks[i].is_capitalized() && toks[i].is_word()) {
            i += 1;
            continue;
        }
        let mut j = i;
        loop {
            let next = j + 1;
            if next < range.end && toks[next].is_capitalized() && toks[next].is_word() {
                j = next;
                continue;
            }
            let mut k = next;
            while k < range.end && is_name_connector(&toks[k].lowercase) && !toks[k].is_capitalized() {
                k += 1;
            }
            if k > next && k < range.end && toks[k].is_capitalized() && toks[k].is_word() {
                j = k;
                continue;
            }
            break;
        }
        if toks[i..=j].iter().any(|t| !is_stopword(&t.lowercase)) {
            out.push(passage.span(i, j));
        }
        i = j + 1;
    }
}

#[allow(clippy::needless_range_loop)]
fn content_ngrams(passage: &Passage, range: Range<usize>, out: &mut Vec<MentionSpan>) {
    let toks = &passage.tokens;
    let lower_word = |t: &Token| t.is_word() && !t.is_capitalized();
    let content = |t: &Token| lower_word(t) && !is_stopword(&t.lowercase);
    let mut seg_start = range.start;
    while seg_start < range.end {
        if !lower_word(&toks[seg_start]) {
            seg_start += 1;
            continue;
        }
        let mut seg_end = seg_start;
        while seg_end < range.end && lower_word(&toks[seg_end]) {
            seg_end += 1;
        }
        for a in seg_start..seg_end {
            if !content(&toks[a]) {
                continue;
            }
            for b in a..seg_end.min(a + MAX_NGRAM) {
                if content(&toks[b]) {
                    out.push(passage.span(a, b));
                }
            }
        }
        seg_start = seg_end;
    }
}

/// Candidate entities of a passage: capitalized name runs plus lowercase
/// content-word n-grams (up to four tokens, no stopword at either edge),
/// one span per entity key, earliest occurrence first.
pub fn candidate_entities(passage: &Passage) -> Vec<MentionSpan> {
    let mut seen = BTreeSet::new();
    chunk_spans(passage)
        .into_iter()
        .filter(|s| seen.insert(s.entity_key.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(texts(&tokenize("Zoo Lake.")), vec!["Zoo", "Lake", "."]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn tokenize_keeps_dotted_abbreviations() {
        assert_eq!(texts(&tokenize("U.K.-based")), vec!["U.K.", "-", "based"]);
        assert_eq!(texts(&tokenize("e.g. this")), vec!["e.g.", "this"]);
        assert_eq!(texts(&tokenize("Mr. Smith")), vec!["Mr.", "Smith"]);
    }

    #[test]
    fn tokenize_numbers_and_clitics() {
        assert_eq!(texts(&tokenize("it costs 3.5 or 1,000.")), vec!["it", "costs", "3.5", "or", "1,000", "."]);
        assert_eq!(texts(&tokenize("Carlisle's album")), vec!["Carlisle", "'s", "album"]);
        assert_eq!(texts(&tokenize("\"Always\"")), vec!["\"", "Always", "\""]);
        assert_eq!(texts(&tokenize("record_label x")), vec!["record_label", "x"]);
    }

    #[test]
    fn offsets_point_into_source() {
        let text = "  The  Gap Cycle ( published by Bantam Books ) .";
        for t in tokenize(text) {
            assert_eq!(&text[t.offset..t.offset + t.text.len()], t.text);
        }
    }

    #[test]
    fn segment_examples() {
        let r = segment_sentences(&tokenize("A. B!"));
        assert_eq!(r, vec![0..2, 2..4]);
        let r = segment_sentences(&tokenize("no terminal punctuation here"));
        assert_eq!(r, vec![0..4]);
        assert!(segment_sentences(&[]).is_empty());
        let r = segment_sentences(&tokenize("He met Mr. Smith. Then \"left!\" Done"));
        assert_eq!(r.len(), 3);
        assert_eq!(r[1], 5..10);
    }

    #[test]
    fn from_sentences_keeps_boundaries() {
        let p = Passage::from_sentences(3, &["Dr. Who met Amy", "They left."]);
        assert_eq!(p.sentences, vec![0..4, 4..7]);
        assert_eq!(p.text, "Dr. Who met Amy They left.");
        for t in &p.tokens {
            assert_eq!(&p.text[t.offset..t.offset + t.text.len()], t.text);
        }
    }

    #[test]
    fn find_mentions_examples() {
        let p = Passage::new(0, "It said Zoo Lake is a popular lake and public park in Johannesburg .");
        let m = find_mentions(&p, &["zoo lake"]);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].start, m[0].end), (2, 3));
        assert_eq!(m[0].surface, "Zoo Lake");
        assert_eq!(m[0].entity_key, "zoo lake");
        assert!(find_mentions(&p, &["gauteng"]).is_empty());

        let p = Passage::new(1, "Bo met Al. Later Bo left.");
        let m = find_mentions(&p, &["bo"]);
        assert_eq!(m.iter().map(|s| s.start).collect::<Vec<_>>(), vec![0, 5]);
    }

    #[test]
    fn find_mentions_merges_overlaps() {
        let p = Passage::new(0, "ha ha ha");
        let m = find_mentions(&p, &["ha ha"]);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].start, m[0].end), (0, 1));
    }

    fn keys(spans: &[MentionSpan]) -> Vec<&str> {
        spans.iter().map(|s| s.entity_key.as_str()).collect()
    }

    #[test]
    fn chunker_examples() {
        let p = Passage::new(0, "Belinda Carlisle released the album");
        let k = keys(&candidate_entities(&p)).into_iter().map(String::from).collect::<Vec<_>>();
        assert!(k.contains(&"belinda carlisle".into()));
        assert!(k.contains(&"album".into()));

        let p = Passage::new(0, "It is what it was.");
        assert!(candidate_entities(&p).is_empty());

        let p = Passage::new(0, "the final book of the Gap Cycle");
        let k = keys(&candidate_entities(&p)).into_iter().map(String::from).collect::<Vec<_>>();
        assert!(k.contains(&"gap cycle".into()));
        assert!(!k.iter().any(|k| k.starts_with("the ")));
    }

    #[test]
    fn chunker_handles_connectors() {
        let p = Passage::new(0, "the second single from Belinda Carlisle 's A Woman and a Man album .");
        let k = keys(&candidate_entities(&p)).into_iter().map(String::from).collect::<Vec<_>>();
        assert!(k.contains(&"a woman and a man".into()), "{k:?}");
        assert!(k.contains(&"belinda carlisle".into()));
        // trailing connector without a following name does not extend the run
        let p = Passage::new(0, "Bank of the river");
        assert_eq!(keys(&candidate_entities(&p))[0], "bank");
    }

    #[test]
    fn annotated_entities_replace_chunker() {
        let mut p = Passage::new(0, "Alpha met Beta near the old mill.");
        p.annotated_entities = Some(vec!["old mill".into()]);
        assert_eq!(keys(&candidate_entities(&p)), vec!["old mill"]);
    }

    #[test]
    fn entity_key_normalizes() {
        assert_eq!(entity_key("  Chrysalis   Records "), "chrysalis records");
    }
}
