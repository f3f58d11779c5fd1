//! Rule-based sentence splitting.

/// Tokens ending in a period that never close a sentence.
const ABBREVIATIONS: [&str; 7] = ["Mr.", "Dr.", "e.g.", "i.e.", "vs.", "St.", "No."];

/// Split on `.`, `?` or `!` when followed by whitespace and then an uppercase
/// letter or digit. Returned sentences are trimmed and non-empty.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '?' | '!') {
            continue;
        }
        let end = i + c.len_utf8();
        let mut j = k + 1;
        if !chars.get(j).is_some_and(|(_, c)| c.is_whitespace()) {
            continue;
        }
        while chars.get(j).is_some_and(|(_, c)| c.is_whitespace()) {
            j += 1;
        }
        let Some(&(_, next)) = chars.get(j) else {
            continue;
        };
        if !(next.is_uppercase() || next.is_ascii_digit()) {
            continue;
        }
        if c == '.' && ends_with_abbreviation(&text[start..end]) {
            continue;
        }
        push_trimmed(&mut sentences, &text[start..end]);
        start = end;
    }
    push_trimmed(&mut sentences, &text[start..]);
    sentences
}

fn ends_with_abbreviation(span: &str) -> bool {
    let last = span.split_whitespace().last().unwrap_or("");
    ABBREVIATIONS.contains(&last)
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s);
    }
}
