use std::collections::BTreeSet;

use crate::corpus::{tokenize, CooccurrenceSource};
use crate::query::{expand_terms, jaccard};
use crate::rules::Rule;

/// The query's expanded term neighbourhood.
pub struct SemanticArea<'a> {
    oracle: &'a dyn CooccurrenceSource,
    expansion: BTreeSet<String>,
}

impl<'a> SemanticArea<'a> {
    pub fn new<'t>(terms: impl IntoIterator<Item = &'t str>, oracle: &'a dyn CooccurrenceSource) -> Self {
        let expansion = expand_terms(terms, oracle);
        SemanticArea { oracle, expansion }
    }

    pub fn expansion(&self) -> &BTreeSet<String> {
        &self.expansion
    }

    /// Jaccard overlap between the expanded tokens of `phrase` and the area.
    pub fn score(&self, phrase: &str) -> f64 {
        let tokens = tokenize(phrase);
        let expanded = expand_terms(tokens.iter().map(String::as_str), self.oracle);
        jaccard(&expanded, &self.expansion)
    }

    pub fn is_relevant(&self, phrase: &str, tau: f64) -> bool {
        self.score(phrase) >= tau
    }
}

/// Rules whose conclusion scores at least `tau` against the area.
pub fn relevance_filter<'r>(rules: &'r [Rule], area: &SemanticArea<'_>, tau: f64) -> Vec<&'r Rule> {
    debug_assert!((0.0..=1.0).contains(&tau));
    rules.iter().filter(|r| area.is_relevant(&r.conclusion, tau)).collect()
}
