//! Fixed English stoplist shared by the chunker and the idf retriever.

/// 150 lowercase function words, sorted for binary search.
pub const STOPWORDS: [&str; 150] = [
    "'s", "a", "about", "above", "across", "after", "again", "against", "all", "along",
    "also", "am", "among", "an", "and", "any", "are", "around", "as", "at",
    "be", "because", "been", "before", "behind", "being", "below", "beside", "between", "beyond",
    "both", "but", "by", "can", "could", "did", "do", "does", "doing", "down",
    "during", "each", "few", "for", "from", "further", "had", "has", "have", "having",
    "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "i",
    "if", "in", "into", "is", "it", "its", "itself", "just", "may", "me",
    "might", "more", "most", "must", "my", "myself", "near", "no", "nor", "not",
    "now", "of", "off", "on", "once", "only", "onto", "or", "other", "our",
    "ours", "ourselves", "out", "over", "own", "per", "same", "shall", "she", "should",
    "since", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "though", "through", "to",
    "too", "toward", "under", "until", "up", "upon", "very", "via", "was", "we",
    "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will",
    "with", "within", "without", "would", "yet", "you", "your", "yours", "yourself", "yourselves",
];

/// Lowercase stopwords allowed inside a capitalized name ("Bank of America",
/// "A Woman and a Man").
pub const NAME_CONNECTORS: [&str; 11] = ["a", "an", "and", "de", "del", "der", "du", "la", "of", "the", "von"];

pub fn is_stopword(lowercase: &str) -> bool {
    STOPWORDS.binary_search(&lowercase).is_ok()
}

pub fn is_name_connector(lowercase: &str) -> bool {
    NAME_CONNECTORS.contains(&lowercase)
}
