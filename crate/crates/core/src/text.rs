//! Tokenization and sentence splitting shared by the full-text index and the
//! annotation pipeline.
//!
//! All offsets are Unicode scalar-value (char) indices, not byte offsets.

use crate::datamodel::fold_case;

/// A word token: a maximal run of alphanumeric chars.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Lowercased, umlaut-folded token text.
    pub text: String,
    /// Char offset of the first char.
    pub begin: usize,
    /// Char offset one past the last char.
    pub end: usize,
    /// Zero-based sentence number.
    pub sentence: usize,
}

const ABBREVIATIONS: &[&str] = &["z.b.", "ca.", "dr.", "bzgl.", "bzw.", "u.a.", "v.a.", "d.h.", "li.", "re."];

/// Splits `text` into word tokens with char offsets, without sentence numbers.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    tokens_from_chars(&chars, None)
}

/// Splits `text` into word tokens annotated with sentence numbers.
pub fn tokenize_sentences(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let ends = sentence_ends(&chars);
    tokens_from_chars(&chars, Some(&ends))
}

fn tokens_from_chars(chars: &[char], sentence_ends: Option<&[bool]>) -> Vec<Token> {
    let mut out = Vec::new();
    let mut sentence = 0;
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_alphanumeric() {
            let start = i;
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
            let raw: String = chars[start..i].iter().collect();
            out.push(Token {
                text: fold_case(&raw),
                begin: start,
                end: i,
                sentence,
            });
        } else {
            if sentence_ends.is_some_and(|e| e[i]) {
                sentence += 1;
            }
            i += 1;
        }
    }
    out
}

/// Marks chars that terminate a sentence: `.`, `!`, `?` or newline.
///
/// A period is not a boundary inside a listed abbreviation (`z.B.`, `ca.`,
/// `Dr.`, `bzgl.`, ...) or between two digits (`6.5`).
pub fn sentence_ends(chars: &[char]) -> Vec<bool> {
    let mut ends = vec![false; chars.len()];
    for (i, &c) in chars.iter().enumerate() {
        ends[i] = match c {
            '!' | '?' | '\n' => true,
            '.' => !is_decimal_point(chars, i) && !inside_abbreviation(chars, i),
            _ => false,
        };
    }
    ends
}

fn is_decimal_point(chars: &[char], i: usize) -> bool {
    i > 0
        && i + 1 < chars.len()
        && chars[i - 1].is_ascii_digit()
        && chars[i + 1].is_ascii_digit()
}

fn inside_abbreviation(chars: &[char], i: usize) -> bool {
    ABBREVIATIONS.iter().any(|abbr| {
        let a: Vec<char> = abbr.chars().collect();
        a.iter().enumerate().filter(|(_, &c)| c == '.').any(|(k, _)| {
            if k > i || i - k + a.len() > chars.len() {
                return false;
            }
            let start = i - k;
            let matches = a
                .iter()
                .zip(&chars[start..start + a.len()])
                .all(|(x, y)| y.to_lowercase().eq(std::iter::once(*x)));
            let bounded = start == 0 || !chars[start - 1].is_alphanumeric();
            matches && bounded
        })
    })
}

/// Returns the substring between two char offsets.
pub fn char_slice(text: &str, begin: usize, end: usize) -> String {
    text.chars().skip(begin).take(end - begin).collect()
}
