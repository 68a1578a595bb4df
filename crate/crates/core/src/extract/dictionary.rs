//! Term dictionaries and the token trie used for longest-match lookup.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnnotationType, ExtractError};
use crate::datamodel::normalize_term;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub term: String,
    pub code: Option<String>,
    pub definition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dictionary {
    pub annotation_type: AnnotationType,
    pub tier: Tier,
    pub entries: Vec<DictionaryEntry>,
}

impl Dictionary {
    pub fn new(annotation_type: AnnotationType, tier: Tier) -> Self {
        Dictionary {
            annotation_type,
            tier,
            entries: Vec::new(),
        }
    }

    pub fn with_terms<'a>(
        annotation_type: AnnotationType,
        tier: Tier,
        terms: impl IntoIterator<Item = (&'a str, Option<&'a str>)>,
    ) -> Self {
        let entries = terms
            .into_iter()
            .map(|(t, c)| DictionaryEntry {
                term: t.to_string(),
                code: c.map(str::to_string),
                definition: None,
            })
            .collect();
        Dictionary {
            annotation_type,
            tier,
            entries,
        }
    }

    pub fn contains_normalized(&self, term: &str) -> bool {
        let n = normalize_term(term);
        self.entries.iter().any(|e| normalize_term(&e.term) == n)
    }

    /// Parses `term<TAB>code<TAB>definition` lines. Empty columns are absent;
    /// blank lines and `#` comments are skipped.
    pub fn parse_tsv(annotation_type: AnnotationType, tier: Tier, content: &str) -> Self {
        let entries = content
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|line| {
                let mut cols = line.split('\t');
                let term = cols.next().unwrap_or("").trim().to_string();
                let opt = |s: Option<&str>| s.map(str::trim).filter(|s| !s.is_empty()).map(String::from);
                let code = opt(cols.next());
                let definition = opt(cols.next());
                DictionaryEntry { term, code, definition }
            })
            .filter(|e| !e.term.is_empty())
            .collect();
        Dictionary {
            annotation_type,
            tier,
            entries,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.term);
            out.push('\t');
            out.push_str(e.code.as_deref().unwrap_or(""));
            out.push('\t');
            out.push_str(e.definition.as_deref().unwrap_or(""));
            out.push('\n');
        }
        out
    }
}

/// Loads every `<annotation_type>.tsv` in `dir`, sorted by file name.
pub fn load_dictionary_dir(dir: &Path, tier: Tier) -> Result<Vec<Dictionary>, ExtractError> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| ExtractError::Io(dir.display().to_string(), e.to_string()))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let ty: AnnotationType = stem.parse()?;
            let content = fs::read_to_string(&p)
                .map_err(|e| ExtractError::Io(p.display().to_string(), e.to_string()))?;
            Ok(Dictionary::parse_tsv(ty, tier, &content))
        })
        .collect()
}

/// Location of an entry inside a config's dictionary list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct EntryRef {
    pub dict: usize,
    pub entry: usize,
}

#[derive(Debug, Default)]
struct Node {
    children: HashMap<String, usize>,
    terminal: Option<EntryRef>,
}

/// Trie over folded token sequences.
///
/// The first entry inserted for a token sequence keeps the terminal, so
/// system dictionaries (inserted first) win over user entries on ties.
#[derive(Debug)]
pub(crate) struct TokenTrie {
    nodes: Vec<Node>,
}

impl TokenTrie {
    pub fn build(dictionaries: &[Dictionary]) -> Self {
        let mut trie = TokenTrie {
            nodes: vec![Node::default()],
        };
        let order = dictionaries
            .iter()
            .enumerate()
            .filter(|(_, d)| d.tier == Tier::System)
            .chain(dictionaries.iter().enumerate().filter(|(_, d)| d.tier == Tier::User));
        for (di, dict) in order {
            for (ei, entry) in dict.entries.iter().enumerate() {
                let toks: Vec<String> = tokenize(&entry.term).into_iter().map(|t| t.text).collect();
                if toks.is_empty() {
                    continue;
                }
                trie.insert(&toks, EntryRef { dict: di, entry: ei });
            }
        }
        trie
    }

    fn insert(&mut self, toks: &[String], r: EntryRef) {
        let mut node = 0;
        for t in toks {
            node = match self.nodes[node].children.get(t) {
                Some(&n) => n,
                None => {
                    self.nodes.push(Node::default());
                    let n = self.nodes.len() - 1;
                    self.nodes[node].children.insert(t.clone(), n);
                    n
                }
            };
        }
        if self.nodes[node].terminal.is_none() {
            self.nodes[node].terminal = Some(r);
        }
    }

    /// Longest entry starting at `start`; returns (entry, last token index).
    /// A match never crosses a sentence boundary.
    pub fn longest_match(&self, tokens: &[crate::text::Token], start: usize) -> Option<(EntryRef, usize)> {
        let sentence = tokens[start].sentence;
        let mut node = 0;
        let mut best = None;
        for (i, tok) in tokens.iter().enumerate().skip(start) {
            if tok.sentence != sentence {
                break;
            }
            match self.nodes[node].children.get(&tok.text) {
                Some(&n) => node = n,
                None => break,
            }
            if let Some(r) = self.nodes[node].terminal {
                best = Some((r, i));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_round_trip() {
        let d = Dictionary::parse_tsv(
            AnnotationType::Diagnosis,
            Tier::System,
            "# comment\nHypertonie\tI10\tBluthochdruck\nAnämie\t\t\n\n",
        );
        assert_eq!(d.entries.len(), 2);
        assert_eq!(d.entries[0].code.as_deref(), Some("I10"));
        assert_eq!(d.entries[1].code, None);
        let again = Dictionary::parse_tsv(AnnotationType::Diagnosis, Tier::System, &d.to_tsv());
        assert_eq!(again, d);
    }

    #[test]
    fn trie_prefers_longest() {
        let d = Dictionary::with_terms(
            AnnotationType::Diagnosis,
            Tier::System,
            [("Anämie", None), ("renale Anämie", Some("D63.8"))],
        );
        let trie = TokenTrie::build(&[d]);
        let toks = crate::text::tokenize_sentences("Renale Anämie bekannt");
        let (r, last) = trie.longest_match(&toks, 0).unwrap();
        assert_eq!((r.entry, last), (1, 1));
        let (r, last) = trie.longest_match(&toks, 1).unwrap();
        assert_eq!((r.entry, last), (0, 1));
        assert!(trie.longest_match(&toks, 2).is_none());
    }
}
