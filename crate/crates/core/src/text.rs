//! Word-boundary helpers shared by marker detection, phrase filtering and
//! the corpus scanner. A boundary is a transition between an alphanumeric
//! and a non-alphanumeric character (or either end of the text).

pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// True if `haystack[start..end]` is delimited by word boundaries.
pub fn at_word_boundaries(haystack: &str, start: usize, end: usize) -> bool {
    let before = haystack[..start].chars().next_back();
    let after = haystack[end..].chars().next();
    !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char)
}

/// Case-insensitive whole-word search. `needle` may span several words.
pub fn contains_word(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let hay = haystack.to_lowercase();
    let needle = needle.to_lowercase();
    hay.match_indices(&needle)
        .any(|(start, m)| at_word_boundaries(&hay, start, start + m.len()))
}

/// Lowercased alphanumeric tokens.
pub fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !is_word_char(c))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
