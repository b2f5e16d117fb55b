//! Word-level tokenization shared by the surrogate LM and the reward.

/// Marks that end a sentence; kept as standalone tokens.
pub const SENTENCE_MARKS: [char; 3] = ['.', '!', '?'];

fn is_sentence_mark(c: char) -> bool {
    SENTENCE_MARKS.contains(&c)
}

/// Lowercases, splits on whitespace and trims punctuation from both ends of
/// each word. A sentence mark in the trailing punctuation run is emitted as
/// its own token after the word. Never yields empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_lowercase();
        let core = lower.trim_matches(|c: char| !c.is_alphanumeric());
        let trailing = match lower.rfind(|c: char| c.is_alphanumeric()) {
            Some(pos) => {
                let end = pos + lower[pos..].chars().next().map_or(0, char::len_utf8);
                &lower[end..]
            }
            None => lower.as_str(),
        };
        if !core.is_empty() {
            out.push(core.to_string());
        }
        if let Some(mark) = trailing.chars().find(|&c| is_sentence_mark(c)) {
            out.push(mark.to_string());
        }
    }
    out
}

/// Inverse of [`tokenize`] up to whitespace and case: joins with single
/// spaces and glues sentence marks onto the preceding word.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let tok = tok.as_ref();
        let is_mark = tok.len() == 1 && tok.chars().all(is_sentence_mark);
        if !out.is_empty() && !is_mark {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use regex::Regex;

    // Independent formulation of the same rule via a regex over each chunk.
    fn regex_tokenize(text: &str) -> Vec<String> {
        let re = Regex::new(r"^[^\p{Alphabetic}\p{N}]*(.*?)([^\p{Alphabetic}\p{N}]*)$").unwrap();
        let mut out = Vec::new();
        for chunk in text.split_whitespace() {
            let lower = chunk.to_lowercase();
            let caps = re.captures(&lower).unwrap();
            let core = caps.get(1).unwrap().as_str();
            let trail = caps.get(2).unwrap().as_str();
            // an all-punctuation chunk lands entirely in the leading group
            let trail = if core.is_empty() { lower.as_str() } else { trail };
            if !core.is_empty() {
                out.push(core.to_string());
            }
            if let Some(m) = Regex::new(r"[.!?]").unwrap().find(trail) {
                out.push(m.as_str().to_string());
            }
        }
        out
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n\t").is_empty());
    }

    #[test]
    fn simple_sentence() {
        assert_eq!(tokenize("The cat sat."), vec!["the", "cat", "sat", "."]);
    }

    #[test]
    fn comma_and_exclamation() {
        let expected = vec!["hello", "world", "!"];
        assert_eq!(tokenize("Hello,  world!"), expected);
        assert_eq!(regex_tokenize("Hello,  world!"), expected);
    }

    #[test]
    fn punctuation_only_chunks() {
        assert_eq!(tokenize("wait ... what?!"), vec!["wait", ".", "what", "?"]);
        assert_eq!(tokenize("a -- b"), vec!["a", "b"]);
    }

    #[test]
    fn matches_regex_oracle_on_mixed_text() {
        let samples = [
            "Dr. Smith's (new) paper: \"Great!\" e.g. 3.5% gains?",
            "¿Qué tal? Ünïcode wörds « fine.",
            "...leading dots and trailing;; commas,,",
            "x!y? z.",
        ];
        for s in samples {
            assert_eq!(tokenize(s), regex_tokenize(s), "{s}");
        }
    }

    #[test]
    fn detokenize_glues_marks() {
        let toks = tokenize("The cat sat. Then it left!");
        assert_eq!(detokenize(&toks), "the cat sat. then it left!");
        assert_eq!(tokenize(&detokenize(&toks)), toks);
    }

    proptest::proptest! {
        #[test]
        fn never_emits_empty_tokens(s in "\\PC{0,60}") {
            for t in tokenize(&s) {
                proptest::prop_assert!(!t.is_empty());
            }
        }

        #[test]
        fn agrees_with_regex_oracle(s in "[a-zA-Z.,!?;:' -]{0,60}") {
            proptest::prop_assert_eq!(tokenize(&s), regex_tokenize(&s));
        }
    }
}
