//! Production rules and the line-oriented rule language.
//!
//! ```text
//! # comment
//! IF wings AND engine AND chassis THEN plane
//! IF car THEN used for transportation [0.9]
//! ```
//!
//! `IF`, `AND` and `THEN` are case-sensitive keywords. Phrases are normalized
//! with the corpus tokenizer, so the angle-bracket notation
//! `IF <arsenic in hair> THEN <was poisoned>` parses to the same rule.
//! `THEN x AND y` yields one rule per conclusion.

mod graph;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::normalize_phrase;

pub use graph::{validate, ChainSegment, RuleEdge, RuleGraph, ValidationReport};

#[derive(Debug, Error, PartialEq)]
pub enum RuleError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("rule {rule_id} concludes one of its own conditions (`{term}`)")]
    SelfLoop { rule_id: RuleId, term: String },
    #[error("duplicate rule id {0}")]
    DuplicateId(RuleId),
    #[error("rule {rule_id}: {message}")]
    Invalid { rule_id: RuleId, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleId(pub String);

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RuleId {
    fn from(s: &str) -> Self {
        RuleId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: RuleId,
    /// Conjunctive, deduplicated, in written order.
    pub conditions: Vec<String>,
    pub conclusion: String,
    pub confidence: f64,
    pub order_index: usize,
    pub source: String,
}

impl Rule {
    /// Builds a rule from raw phrases, normalizing them.
    pub fn new<S: AsRef<str>>(
        id: impl Into<String>,
        conditions: &[S],
        conclusion: &str,
        confidence: f64,
        order_index: usize,
    ) -> Self {
        let mut seen = BTreeSet::new();
        let conditions = conditions
            .iter()
            .map(|c| normalize_phrase(c.as_ref()))
            .filter(|c| seen.insert(c.clone()))
            .collect();
        Rule {
            id: RuleId(id.into()),
            conditions,
            conclusion: normalize_phrase(conclusion),
            confidence,
            order_index,
            source: String::new(),
        }
    }

    fn check(&self) -> Result<(), RuleError> {
        let invalid = |message: &str| RuleError::Invalid {
            rule_id: self.id.clone(),
            message: message.to_string(),
        };
        if self.conditions.is_empty() || self.conditions.iter().any(String::is_empty) {
            return Err(invalid("empty condition"));
        }
        if self.conclusion.is_empty() {
            return Err(invalid("empty conclusion"));
        }
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return Err(invalid("confidence must be in (0, 1]"));
        }
        Ok(())
    }
}

impl fmt::Display for Rule {
    /// Canonical rule-language form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IF {} THEN {}", self.conditions.join(" AND "), self.conclusion)?;
        if self.confidence != 1.0 {
            write!(f, " [{}]", self.confidence)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleBase {
    rules: Vec<Rule>,
    version_hash: String,
}

impl RuleBase {
    pub fn new(rules: Vec<Rule>) -> Result<Self, RuleError> {
        let mut ids = BTreeSet::new();
        for rule in &rules {
            rule.check()?;
            if !ids.insert(&rule.id) {
                return Err(RuleError::DuplicateId(rule.id.clone()));
            }
        }
        let version_hash = version_hash(&rules);
        Ok(Self { rules, version_hash })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new()).expect("empty rule base is valid")
    }

    pub fn parse(text: &str, source: &str) -> Result<Self, RuleError> {
        Self::new(parse_rules(text, source)?)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, id: &RuleId) -> Option<&Rule> {
        self.rules.iter().find(|r| &r.id == id)
    }

    pub fn version_hash(&self) -> &str {
        &self.version_hash
    }

    pub fn to_text(&self) -> String {
        serialize_rules(&self.rules)
    }
}

fn version_hash(rules: &[Rule]) -> String {
    let mut hasher = Sha256::new();
    for rule in rules {
        hasher.update(format!("{}\t{}\t{}\n", rule.id, rule.order_index, rule).as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Canonical text: one rule per line.
pub fn serialize_rules(rules: &[Rule]) -> String {
    rules.iter().map(|r| format!("{r}\n")).collect()
}

/// Parses the rule language. Rule ids are `R<line>`, or `R<line>.<n>` when a
/// line has several conclusions; `order_index` is the line number.
pub fn parse_rules(text: &str, source: &str) -> Result<Vec<Rule>, RuleError> {
    let mut rules = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let syntax = |message: &str| RuleError::Syntax {
            line,
            message: message.to_string(),
        };

        let (body, confidence) = split_confidence(content).map_err(|m| syntax(&m))?;
        let words: Vec<&str> = body.split_whitespace().collect();
        if words.first() != Some(&"IF") {
            return Err(syntax("expected `IF` at start of rule"));
        }
        let then_at: Vec<usize> = words
            .iter()
            .enumerate()
            .filter(|(_, w)| **w == "THEN")
            .map(|(i, _)| i)
            .collect();
        let then_at = match then_at.as_slice() {
            [] => return Err(syntax("missing `THEN`")),
            [one] => *one,
            _ => return Err(syntax("more than one `THEN`")),
        };
        let conditions = phrases(&words[1..then_at]).map_err(|_| syntax("empty condition"))?;
        let conclusions = phrases(&words[then_at + 1..]).map_err(|_| syntax("empty conclusion"))?;
        if words[1..].contains(&"IF") {
            return Err(syntax("unexpected `IF`"));
        }

        let many = conclusions.len() > 1;
        for (n, conclusion) in conclusions.into_iter().enumerate() {
            let id = if many {
                format!("R{line}.{}", n + 1)
            } else {
                format!("R{line}")
            };
            let mut rule = Rule::new(id, &conditions, &conclusion, confidence, line);
            rule.source = source.to_string();
            rules.push(rule);
        }
    }
    Ok(rules)
}

fn split_confidence(content: &str) -> Result<(&str, f64), String> {
    let Some(stripped) = content.strip_suffix(']') else {
        return Ok((content, 1.0));
    };
    let open = stripped.rfind('[').ok_or("unbalanced `]`")?;
    let value = stripped[open + 1..].trim();
    let confidence: f64 = value.parse().map_err(|_| format!("invalid confidence `{value}`"))?;
    if !(confidence > 0.0 && confidence <= 1.0) {
        return Err(format!("confidence {confidence} outside (0, 1]"));
    }
    Ok((&stripped[..open], confidence))
}

/// Splits `AND`-separated words into normalized phrases.
fn phrases(words: &[&str]) -> Result<Vec<String>, ()> {
    let groups: Vec<String> = words
        .split(|w| *w == "AND")
        .map(|group| normalize_phrase(&group.join(" ")))
        .collect();
    if groups.iter().any(String::is_empty) {
        return Err(());
    }
    Ok(groups)
}
