//! Word-level matching used for core keywords: case-insensitive, whitespace
//! collapsed, punctuation at word edges ignored.

fn normalize_word(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

fn normalized_words(s: &str) -> Vec<String> {
    s.split_whitespace().map(normalize_word).collect()
}

/// Collapses runs of whitespace to single spaces and trims the ends.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Word ranges `[start, end)` of every non-overlapping occurrence of `phrase`
/// in `text`, scanning left to right.
pub fn phrase_occurrences(text: &str, phrase: &str) -> Vec<(usize, usize)> {
    let words = normalized_words(text);
    let needle: Vec<String> = normalized_words(phrase).into_iter().filter(|w| !w.is_empty()).collect();
    let mut found = Vec::new();
    if needle.is_empty() || needle.len() > words.len() {
        return found;
    }
    let mut i = 0;
    while i + needle.len() <= words.len() {
        if words[i..i + needle.len()] == needle[..] {
            found.push((i, i + needle.len()));
            i += needle.len();
        } else {
            i += 1;
        }
    }
    found
}

pub fn contains_phrase(text: &str, phrase: &str) -> bool {
    !phrase_occurrences(text, phrase).is_empty()
}

/// `text` with every occurrence of every phrase removed, whitespace
/// collapsed. May be empty.
pub fn remove_phrases(text: &str, phrases: &[String]) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut keep = vec![true; words.len()];
    for phrase in phrases {
        for (start, end) in phrase_occurrences(text, phrase) {
            keep[start..end].iter_mut().for_each(|k| *k = false);
        }
    }
    words.iter().zip(keep).filter(|(_, k)| *k).map(|(w, _)| *w).collect::<Vec<_>>().join(" ")
}
