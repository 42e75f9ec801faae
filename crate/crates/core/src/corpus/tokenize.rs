const TERMINAL: &[char] = &['.', ',', '!', '?', ';', ':'];

fn is_terminal(c: char) -> bool {
    TERMINAL.contains(&c)
}

/// Lowercases, splits on whitespace and peels trailing punctuation off each
/// word into separate one-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let lower = word.to_lowercase();
        let stem = lower.trim_end_matches(is_terminal);
        if !stem.is_empty() {
            out.push(stem.to_string());
        }
        out.extend(lower[stem.len()..].chars().map(String::from));
    }
    out
}

/// Joins tokens with single spaces, attaching punctuation tokens to the
/// preceding word.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for t in tokens {
        let t = t.as_ref();
        let attach = t.chars().count() == 1 && t.chars().all(is_terminal);
        if !out.is_empty() && !attach {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}
