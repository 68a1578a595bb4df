//! Regular-expression rule annotators.

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

use super::{AnnotationType, ExtractError};

/// BIRADS reference: optional `BI`, optional hyphen/space, `RADS`, optional
/// colon/space separator, category 0–6 or I–VI, optional a–c subdivision.
pub const BIRADS_PATTERN: &str =
    r"(?i)\b(?:BI[-\s]?)?RADS(?:\s*:\s*|\s*)(?P<cat>VI|IV|V|III|II|I|[0-6])(?P<suffix>[a-c])?\b";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Canonicalizer {
    /// Named group `canon` if present, else the whole match.
    #[default]
    Verbatim,
    /// Groups `cat` (arabic or roman) and `suffix`, rendered like `4b`.
    Birads,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub name: String,
    pub annotation_type: AnnotationType,
    pub pattern: String,
    #[serde(default)]
    pub canonicalizer: Canonicalizer,
}

impl RuleSpec {
    pub fn birads() -> Self {
        RuleSpec {
            name: "birads".to_string(),
            annotation_type: AnnotationType::Birads,
            pattern: BIRADS_PATTERN.to_string(),
            canonicalizer: Canonicalizer::Birads,
        }
    }

    pub fn compile(&self) -> Result<Regex, ExtractError> {
        Regex::new(&self.pattern).map_err(|e| ExtractError::Rule {
            name: self.name.clone(),
            message: e.to_string(),
        })
    }

    pub(crate) fn canonical(&self, caps: &Captures<'_>) -> String {
        match self.canonicalizer {
            Canonicalizer::Verbatim => caps
                .name("canon")
                .or_else(|| caps.get(0))
                .map(|m| m.as_str().to_string())
                .unwrap_or_default(),
            Canonicalizer::Birads => {
                let cat = caps.name("cat").map(|m| m.as_str()).unwrap_or("");
                let digit = match cat.to_ascii_uppercase().as_str() {
                    "I" => "1",
                    "II" => "2",
                    "III" => "3",
                    "IV" => "4",
                    "V" => "5",
                    "VI" => "6",
                    _ => cat,
                };
                let suffix = caps
                    .name("suffix")
                    .map(|m| m.as_str().to_ascii_lowercase())
                    .unwrap_or_default();
                format!("{digit}{suffix}")
            }
        }
    }
}

/// Parses a rules file: `name<TAB>type<TAB>regex[<TAB>canonicalizer]` per line.
pub fn parse_rules(content: &str) -> Result<Vec<RuleSpec>, ExtractError> {
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 3 {
                return Err(ExtractError::RulesFile {
                    line: n + 1,
                    message: "expected name<TAB>type<TAB>regex".into(),
                });
            }
            let canonicalizer = match cols.get(3).map(|s| s.trim()) {
                None | Some("") | Some("verbatim") => Canonicalizer::Verbatim,
                Some("birads") => Canonicalizer::Birads,
                Some(other) => {
                    return Err(ExtractError::RulesFile {
                        line: n + 1,
                        message: format!("unknown canonicalizer {other:?}"),
                    })
                }
            };
            let spec = RuleSpec {
                name: cols[0].trim().to_string(),
                annotation_type: cols[1].trim().parse()?,
                pattern: cols[2].to_string(),
                canonicalizer,
            };
            spec.compile()?;
            Ok(spec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canon(text: &str) -> Vec<String> {
        let rule = RuleSpec::birads();
        let re = rule.compile().unwrap();
        re.captures_iter(text).map(|c| rule.canonical(&c)).collect()
    }

    #[test]
    fn birads_variants() {
        assert_eq!(canon("BIRADS 4b links"), vec!["4b"]);
        assert_eq!(canon("BI-RADS: V"), vec!["5"]);
        assert_eq!(canon("Bi-Rads III rechts"), vec!["3"]);
        assert_eq!(canon("RADS 0"), vec!["0"]);
        assert_eq!(canon("BIRADS4a"), vec!["4a"]);
        assert_eq!(canon("BIRADS 7"), Vec::<String>::new());
        assert_eq!(canon("BIRADS 4d"), Vec::<String>::new());
        assert_eq!(canon("BI RADS 2 und BIRADS 6"), vec!["2", "6"]);
    }

    #[test]
    fn rules_file() {
        let rules = parse_rules("# rules\nbirads\tbirads\tBIRADS\\s*(?P<cat>[0-6])\tbirads\n").unwrap();
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].canonicalizer, Canonicalizer::Birads);
        assert!(parse_rules("bad\tline").is_err());
        assert!(parse_rules("x\tbirads\t(unclosed").is_err());
        assert!(parse_rules("x\tnope\tabc").is_err());
    }
}
