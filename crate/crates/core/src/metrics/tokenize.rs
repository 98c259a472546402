use unicode_general_category::{get_general_category, GeneralCategory};

/// A token together with its character (not byte) offsets in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

pub fn is_punctuation(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
    )
}

/// Splits on Unicode whitespace and isolates every punctuation character
/// (general category `P*`) as its own token. Case is preserved.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_spans(text).into_iter().map(|t| t.text.to_string()).collect()
}

pub fn tokenize_spans(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    // (byte offset, char offset) where the current word began
    let mut word: Option<(usize, usize)> = None;
    let mut char_len = 0;

    for (char_pos, (byte_pos, ch)) in text.char_indices().enumerate() {
        char_len = char_pos + 1;
        let punct = is_punctuation(ch);
        if !(punct || ch.is_whitespace()) {
            word.get_or_insert((byte_pos, char_pos));
            continue;
        }
        if let Some((b, c)) = word.take() {
            tokens.push(Token {
                text: &text[b..byte_pos],
                start: c,
                end: char_pos,
            });
        }
        if punct {
            tokens.push(Token {
                text: &text[byte_pos..byte_pos + ch.len_utf8()],
                start: char_pos,
                end: char_pos + 1,
            });
        }
    }
    if let Some((b, c)) = word {
        tokens.push(Token {
            text: &text[b..],
            start: c,
            end: char_len,
        });
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation() {
        assert_eq!(tokenize("Hello, world!"), vec!["Hello", ",", "world", "!"]);
    }

    #[test]
    fn empty_and_whitespace() {
        assert!(tokenize("").is_empty());
        assert!(tokenize(" \t\n ").is_empty());
        assert_eq!(tokenize("a  b"), vec!["a", "b"]);
        assert_eq!(tokenize("a\u{3000}b"), vec!["a", "b"]);
    }

    #[test]
    fn symbols_are_not_punctuation() {
        // '$' and '+' are symbols (S*), so they stay inside words
        assert_eq!(tokenize("$5+3"), vec!["$5+3"]);
        assert_eq!(tokenize("«oui»"), vec!["«", "oui", "»"]);
        assert_eq!(tokenize("你好，世界。"), vec!["你好", "，", "世界", "。"]);
    }

    #[test]
    fn case_is_kept() {
        assert_eq!(tokenize("The the"), vec!["The", "the"]);
    }

    #[test]
    fn offsets_are_chars() {
        let toks = tokenize_spans("né, ok");
        let spans: Vec<_> = toks.iter().map(|t| (t.text, t.start, t.end)).collect();
        assert_eq!(spans, vec![("né", 0, 2), (",", 2, 3), ("ok", 4, 6)]);
    }
}
