/// Punctuation split off the end of a word as its own token.
const TERMINALS: [char; 3] = ['.', ',', ';'];

/// Lowercase, split on whitespace and detach trailing `.`, `,` and `;`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for piece in text.split_whitespace() {
        let lower = piece.to_lowercase();
        let word = lower.trim_end_matches(TERMINALS);
        if !word.is_empty() {
            out.push(word.to_string());
        }
        for ch in lower[word.len()..].chars() {
            out.push(ch.to_string());
        }
    }
    out
}

/// Split a token stream into sentences terminated by `"."`. Trailing tokens
/// without a terminator form a final sentence.
pub fn split_sentences(tokens: &[String]) -> Vec<Vec<String>> {
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for t in tokens {
        current.push(t.clone());
        if t == "." {
            sentences.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
}

/// Canonical string form of a sentence (tokens joined by single spaces).
pub fn sentence_key(tokens: &[String]) -> String {
    tokens.join(" ")
}
