//! Word-level tokenizer shared by the encoders, the generator and every metric.

/// Literal markers that survive tokenization as single, case-preserved tokens.
pub const SPECIAL_MARKERS: [&str; 6] = ["[PAD]", "[UNK]", "[BOS]", "[EOS]", "[SEP]", "[CLS]"];

/// Lowercases, splits on whitespace and emits every punctuation character as its own token.
///
/// The bracketed special markers (`[SEP]`, `[CLS]`, ...) are kept whole.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut rest = text;

    while let Some(ch) = rest.chars().next() {
        if ch == '[' {
            if let Some(marker) = SPECIAL_MARKERS.iter().find(|m| rest.starts_with(**m)) {
                flush(&mut word, &mut tokens);
                tokens.push((*marker).to_string());
                rest = &rest[marker.len()..];
                continue;
            }
        }
        if ch.is_whitespace() {
            flush(&mut word, &mut tokens);
        } else if is_punctuation(ch) {
            flush(&mut word, &mut tokens);
            tokens.push(ch.to_lowercase().collect());
        } else {
            word.extend(ch.to_lowercase());
        }
        rest = &rest[ch.len_utf8()..];
    }
    flush(&mut word, &mut tokens);
    tokens
}

/// Joins tokens with single spaces.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join(" ")
}

fn is_punctuation(ch: char) -> bool {
    !ch.is_alphanumeric() && !ch.is_whitespace()
}

fn flush(word: &mut String, tokens: &mut Vec<String>) {
    if !word.is_empty() {
        tokens.push(std::mem::take(word));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_string_has_no_tokens() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn punctuation_becomes_own_token() {
        assert_eq!(tokenize("The cat, sat."), vec!["the", "cat", ",", "sat", "."]);
    }

    #[test]
    fn whitespace_runs_collapse() {
        assert_eq!(tokenize("a  b"), vec!["a", "b"]);
        assert_eq!(tokenize("\ta\n b  "), vec!["a", "b"]);
    }

    #[test]
    fn sep_marker_survives() {
        let toks = tokenize("Hello: x [SEP] y [SEP]");
        assert_eq!(toks, vec!["hello", ":", "x", "[SEP]", "y", "[SEP]"]);
        assert_eq!(tokenize("a[SEP]b"), vec!["a", "[SEP]", "b"]);
        // lowercase lookalike is plain punctuation
        assert_eq!(tokenize("[sep]"), vec!["[", "sep", "]"]);
    }

    proptest! {
        #[test]
        fn idempotent_on_joined_output(s in "[a-zA-Z0-9 ,.!?'\\[\\]:;-]{0,40}") {
            let once = tokenize(&s);
            let twice = tokenize(&detokenize(&once));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn idempotent_with_markers(parts in proptest::collection::vec("[a-z]{1,5}|\\[SEP\\]|\\[CLS\\]|,", 0..12)) {
            let s = parts.join(" ");
            let once = tokenize(&s);
            prop_assert_eq!(tokenize(&detokenize(&once)), once);
        }
    }
}
