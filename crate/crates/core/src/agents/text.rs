//! Tokenization shared by profile synthesis and overlap scoring.

use std::collections::{BTreeSet, HashMap};

const STOPWORDS: &[&str] = &[
    "a", "about", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be", "been", "but",
    "by", "can", "daily", "do", "does", "for", "from", "get", "got", "has", "have", "he", "her",
    "here", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "just", "like",
    "made", "me", "more", "my", "need", "needs", "new", "no", "not", "now", "of", "on", "one",
    "or", "our", "out", "really", "she", "so", "some", "than", "that", "the", "their", "them",
    "then", "there", "these", "they", "this", "to", "today", "too", "try", "up", "us", "very",
    "was", "we", "were", "what", "when", "which", "who", "will", "with", "would", "you", "your",
];

/// Reduces simple English plurals: "ies" -> "y", trailing "s" (not "ss").
pub fn stem(word: &str) -> String {
    if word.len() > 4 && word.ends_with("ies") {
        format!("{}y", &word[..word.len() - 3])
    } else if word.len() > 3 && word.ends_with('s') && !word.ends_with("ss") {
        word[..word.len() - 1].to_string()
    } else {
        word.to_string()
    }
}

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.binary_search(&word).is_ok()
}

/// Lowercased, stemmed, stopword-free tokens in text order.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !is_stopword(w))
        .map(|w| stem(&w))
        .filter(|w| !is_stopword(w))
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokens(text).into_iter().collect()
}

/// The `n` most frequent tokens across `texts`, ties broken alphabetically.
pub fn top_tokens<'a>(texts: impl IntoIterator<Item = &'a str>, n: usize) -> Vec<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in texts {
        for tok in tokens(t) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(n).map(|(t, _)| t).collect()
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopwords_are_sorted_for_binary_search() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn tokenizer_lowercases_stems_and_filters() {
        assert_eq!(
            tokens("Ruby Face Cream: the moisturizer your skin NEEDS, Creams & berries!"),
            ["ruby", "face", "cream", "moisturizer", "skin", "cream", "berry"]
        );
        assert_eq!(stem("dress"), "dress");
        assert_eq!(stem("gas"), "gas");
    }

    #[test]
    fn frequency_ranking_breaks_ties_alphabetically() {
        let top = top_tokens(["cream serum cream", "serum glow lotion"], 3);
        assert_eq!(top, ["cream", "serum", "glow"]);
    }

    #[test]
    fn jaccard_edge_cases() {
        let a: BTreeSet<_> = ["x", "y"].into_iter().collect();
        let b: BTreeSet<_> = ["y", "z"].into_iter().collect();
        assert_eq!(jaccard(&a, &b), 1.0 / 3.0);
        assert_eq!(jaccard::<&str>(&BTreeSet::new(), &BTreeSet::new()), 0.0);
    }
}
