//! SQL `LIKE` matching.
//!
//! `%` matches any run of characters (possibly empty), `_` exactly one.
//! A backslash makes a following `%`, `_` or `\` literal; before anything
//! else, or at the end of the pattern, it is itself a literal. Matching is
//! over the whole value and case-insensitive under simple case folding.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Atom {
    Any,
    One,
    Lit(char),
}

/// A pattern compiled once and matched against many values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LikePattern {
    atoms: Vec<Atom>,
}

impl LikePattern {
    pub fn new(pattern: &str) -> Self {
        let mut atoms = Vec::new();
        let mut chars = pattern.chars().peekable();
        while let Some(c) = chars.next() {
            let atom = match c {
                '%' => Atom::Any,
                '_' => Atom::One,
                '\\' => match chars.peek() {
                    Some(&next @ ('%' | '_' | '\\')) => {
                        chars.next();
                        Atom::Lit(fold(next))
                    }
                    _ => Atom::Lit('\\'),
                },
                other => Atom::Lit(fold(other)),
            };
            // consecutive '%' are equivalent to one
            if atom == Atom::Any && atoms.last() == Some(&Atom::Any) {
                continue;
            }
            atoms.push(atom);
        }
        LikePattern { atoms }
    }

    /// Greedy wildcard matching with single-point backtracking to the most
    /// recent `%`; linear in practice, `O(n·m)` worst case.
    pub fn matches(&self, value: &str) -> bool {
        let text: Vec<char> = value.chars().map(fold).collect();
        let atoms = &self.atoms;
        let (mut p, mut t) = (0usize, 0usize);
        let mut backtrack: Option<(usize, usize)> = None;

        while t < text.len() {
            match atoms.get(p) {
                Some(Atom::Any) => {
                    backtrack = Some((p, t));
                    p += 1;
                }
                Some(Atom::One) => {
                    p += 1;
                    t += 1;
                }
                Some(Atom::Lit(c)) if *c == text[t] => {
                    p += 1;
                    t += 1;
                }
                _ => match backtrack {
                    Some((bp, bt)) => {
                        p = bp + 1;
                        t = bt + 1;
                        backtrack = Some((bp, bt + 1));
                    }
                    None => return false,
                },
            }
        }
        atoms[p..].iter().all(|a| *a == Atom::Any)
    }
}

pub fn like_match(pattern: &str, value: &str) -> bool {
    LikePattern::new(pattern).matches(value)
}

/// Simple (one-to-one) case folding.
fn fold(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_wildcards() {
        assert!(like_match("%GNU%", "The GNU Project considers…"));
        assert!(like_match("a_c", "abc"));
        assert!(!like_match("a_c", "abbc"));
        assert!(like_match("%", ""));
        assert!(!like_match("_", ""));
        assert!(like_match("", ""));
        assert!(!like_match("", "a"));
    }

    #[test]
    fn whole_value_match() {
        assert!(!like_match("GNU", "The GNU"));
        assert!(like_match("%GNU", "The GNU"));
        assert!(!like_match("%GNU", "The GNU Project"));
    }

    #[test]
    fn case_insensitive() {
        assert!(like_match("%missing CONTENT%", "Incorrect translation is Missing content"));
        assert!(like_match("ÉTÉ", "été"));
    }

    #[test]
    fn escapes() {
        assert!(like_match(r"100\%", "100%"));
        assert!(!like_match(r"100\%", "1000"));
        assert!(like_match(r"a\_b", "a_b"));
        assert!(!like_match(r"a\_b", "axb"));
        assert!(like_match(r"a\\%", r"a\anything"));
        assert!(like_match(r"a\", r"a\"));
        assert!(like_match(r"\d", r"\d"));
    }

    #[test]
    fn backtracking() {
        assert!(like_match("%a%b%c", "xxaxxbxxbxc"));
        assert!(!like_match("%a%b%c", "xxaxxbxxbx"));
        assert!(like_match("%aab", "aaab"));
        assert!(like_match("_%_", "ab"));
        assert!(!like_match("_%_", "a"));
    }
}
