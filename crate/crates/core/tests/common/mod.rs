//! Independent reference implementations used as test oracles. They share
//! no code with the library and favor obviousness over speed.

#![allow(dead_code)]

use std::collections::BTreeSet;

/// ASCII-only tokenizer: whitespace splits, each ASCII punctuation mark is
/// a token of its own. Only valid for ASCII test corpora.
pub fn ascii_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for c in word.chars() {
            assert!(c.is_ascii(), "oracle tokenizer is ASCII-only");
            if c.is_ascii_punctuation() {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Every n-gram of `tokens`, listed explicitly with repeats.
pub fn ngrams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    if tokens.len() < n {
        return out;
    }
    for start in 0..=tokens.len() - n {
        out.push(tokens[start..start + n].to_vec());
    }
    out
}

fn occurrences(list: &[Vec<String>], gram: &[String]) -> usize {
    list.iter().filter(|g| g.as_slice() == gram).count()
}

pub struct OracleBleu {
    pub score: f64,
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
}

/// Corpus BLEU by explicit enumeration: for every distinct hypothesis
/// n-gram, min(count in hyp, count in ref), summed over the corpus.
pub fn oracle_bleu(pairs: &[(String, String)]) -> OracleBleu {
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut h_len, mut r_len) = (0usize, 0usize);
    for (hyp, reference) in pairs {
        let h = ascii_tokens(hyp);
        let r = ascii_tokens(reference);
        h_len += h.len();
        r_len += r.len();
        for n in 1..=4 {
            let hg = ngrams(&h, n);
            let rg = ngrams(&r, n);
            total[n - 1] += hg.len();
            let mut distinct: Vec<Vec<String>> = Vec::new();
            for g in &hg {
                if !distinct.contains(g) {
                    distinct.push(g.clone());
                }
            }
            for g in &distinct {
                matched[n - 1] += occurrences(&hg, g).min(occurrences(&rg, g));
            }
        }
    }
    let precisions: Vec<f64> = (0..4)
        .map(|i| if total[i] == 0 { 0.0 } else { matched[i] as f64 / total[i] as f64 })
        .collect();
    let bp = if h_len > r_len {
        1.0
    } else if h_len == 0 {
        if r_len == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - r_len as f64 / h_len as f64).exp()
    };
    let score = if precisions.contains(&0.0) {
        0.0
    } else {
        let geo = (precisions[0] * precisions[1] * precisions[2] * precisions[3]).powf(0.25);
        100.0 * bp * geo
    };
    OracleBleu {
        score,
        precisions,
        brevity_penalty: bp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Piece {
    Many,
    One,
    Char(char),
}

fn lower(c: char) -> char {
    let mut l = c.to_lowercase();
    match (l.next(), l.next()) {
        (Some(x), None) => x,
        _ => c,
    }
}

fn pieces(pattern: &str) -> Vec<Piece> {
    let chars: Vec<char> = pattern.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\\' && i + 1 < chars.len() && matches!(chars[i + 1], '%' | '_' | '\\') {
            out.push(Piece::Char(lower(chars[i + 1])));
            i += 2;
            continue;
        }
        out.push(match c {
            '%' => Piece::Many,
            '_' => Piece::One,
            other => Piece::Char(lower(other)),
        });
        i += 1;
    }
    out
}

fn naive(p: &[Piece], v: &[char]) -> bool {
    match p.first() {
        None => v.is_empty(),
        Some(Piece::Many) => (0..=v.len()).any(|k| naive(&p[1..], &v[k..])),
        Some(Piece::One) => !v.is_empty() && naive(&p[1..], &v[1..]),
        Some(Piece::Char(c)) => !v.is_empty() && v[0] == *c && naive(&p[1..], &v[1..]),
    }
}

/// Exponential backtracking LIKE matcher.
pub fn naive_like(pattern: &str, value: &str) -> bool {
    let v: Vec<char> = value.chars().map(lower).collect();
    naive(&pieces(pattern), &v)
}

/// Plain LCS length table.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            dp[i][j] = if a[i - 1] == b[j - 1] {
                dp[i - 1][j - 1] + 1
            } else {
                dp[i - 1][j].max(dp[i][j - 1])
            };
        }
    }
    dp[a.len()][b.len()]
}

/// Folds clause hit-sets left to right: AND ∩, OR ∪, AND NOT \.
pub fn fold_sets(first: BTreeSet<usize>, rest: &[(&str, BTreeSet<usize>)]) -> BTreeSet<usize> {
    let mut acc = first;
    for (conj, set) in rest {
        acc = match *conj {
            "AND" => acc.intersection(set).copied().collect(),
            "OR" => acc.union(set).copied().collect(),
            "AND NOT" => acc.difference(set).copied().collect(),
            other => panic!("unknown conjunction {other}"),
        };
    }
    acc
}
