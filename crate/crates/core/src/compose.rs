//! Two-category search results: corpus-backed facts and rule-derived
//! conclusions.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus, DocId, RankedHit};
use crate::inference::{Fact, ForwardOutcome, Trace};
use crate::query::EffectiveQuery;
use crate::rules::Rule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactExtractionSettings {
    pub top_k: usize,
    pub phrase_window: usize,
    pub snippet_tokens: usize,
}

impl Default for FactExtractionSettings {
    fn default() -> Self {
        FactExtractionSettings {
            top_k: 10,
            phrase_window: 8,
            snippet_tokens: 12,
        }
    }
}

/// A statement found in the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactRecord {
    pub statement: String,
    /// Supporting documents in hit rank order.
    pub doc_ids: Vec<DocId>,
    pub snippet: String,
    pub confidence: f64,
}

impl FactRecord {
    pub fn to_fact(&self) -> Fact {
        Fact {
            confidence: self.confidence,
            ..Fact::retrieved(self.statement.clone(), self.doc_ids.clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conclusion {
    pub statement: String,
    pub confidence: f64,
    pub trace_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub query_echo: EffectiveQuery,
    pub facts: Vec<FactRecord>,
    pub conclusions: Vec<Conclusion>,
    pub hits: Vec<RankedHit>,
}

impl SearchResult {
    /// Tokens of every listed statement, used as the request's result terms
    /// in session history.
    pub fn result_terms(&self) -> Vec<String> {
        let statements = self
            .facts
            .iter()
            .map(|f| f.statement.as_str())
            .chain(self.conclusions.iter().map(|c| c.statement.as_str()));
        let terms: BTreeSet<String> = statements.flat_map(tokenize).collect();
        terms.into_iter().collect()
    }
}

struct Match {
    best_rank: usize,
    record: FactRecord,
}

fn find_phrase(corpus: &Corpus, hits: &[RankedHit], phrase: &str, settings: &FactExtractionSettings) -> Option<Match> {
    let tokens = tokenize(phrase);
    let mut found: Option<Match> = None;
    for (rank, hit) in hits.iter().take(settings.top_k).enumerate() {
        let Some(span) = corpus.phrase_match(hit.doc_id, &tokens, settings.phrase_window) else {
            continue;
        };
        match found.as_mut() {
            Some(m) => m.record.doc_ids.push(hit.doc_id),
            None => {
                found = Some(Match {
                    best_rank: rank,
                    record: FactRecord {
                        statement: tokens.join(" "),
                        doc_ids: vec![hit.doc_id],
                        snippet: corpus.snippet(hit.doc_id, span, settings.snippet_tokens),
                        confidence: 1.0,
                    },
                })
            }
        }
    }
    found
}

/// Rule condition phrases found in the top hits.
///
/// When no condition phrase is found, the query terms present in the top hits
/// are reported instead, so a query without applicable rules still lists what
/// it matched. Facts are ordered by their best supporting hit, then by
/// statement.
pub fn extract_facts(
    query: &EffectiveQuery,
    corpus: &Corpus,
    hits: &[RankedHit],
    rules: &[Rule],
    settings: &FactExtractionSettings,
) -> Vec<FactRecord> {
    let conditions: BTreeSet<&str> = rules
        .iter()
        .flat_map(|r| r.conditions.iter().map(String::as_str))
        .collect();
    let mut matches: Vec<Match> = conditions
        .iter()
        .filter_map(|phrase| find_phrase(corpus, hits, phrase, settings))
        .collect();
    if matches.is_empty() {
        matches = query
            .terms()
            .filter_map(|term| find_phrase(corpus, hits, term, settings))
            .collect();
    }
    matches.sort_by(|a, b| {
        a.best_rank
            .cmp(&b.best_rank)
            .then_with(|| a.record.statement.cmp(&b.record.statement))
    });
    matches.into_iter().map(|m| m.record).collect()
}

/// Builds the response and returns the traces backing its conclusions.
///
/// Conclusions are the derived statements not already listed as facts,
/// ordered by descending confidence, then statement.
pub fn compose(
    query: EffectiveQuery,
    facts: Vec<FactRecord>,
    outcome: &ForwardOutcome,
    hits: Vec<RankedHit>,
) -> (SearchResult, Vec<Trace>) {
    let listed: BTreeSet<&str> = facts.iter().map(|f| f.statement.as_str()).collect();
    let mut pairs: Vec<(Conclusion, Trace)> = outcome
        .derived_facts()
        .filter(|f| !listed.contains(f.statement.as_str()))
        .filter_map(|f| {
            let trace = outcome.trace(&f.statement)?;
            let conclusion = Conclusion {
                statement: f.statement.clone(),
                confidence: f.confidence,
                trace_id: trace.trace_id.clone(),
            };
            Some((conclusion, trace))
        })
        .collect();
    pairs.sort_by(|(a, _), (b, _)| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.statement.cmp(&b.statement))
    });
    let (conclusions, traces) = pairs.into_iter().unzip();
    let result = SearchResult {
        query_echo: query,
        facts,
        conclusions,
        hits,
    };
    (result, traces)
}

/// Side-by-side FACTS | CONCLUSIONS table followed by the ranked hits.
pub fn render_text(result: &SearchResult, corpus: Option<&Corpus>) -> String {
    let left: Vec<String> = result
        .facts
        .iter()
        .map(|f| {
            let docs: Vec<String> = f.doc_ids.iter().map(DocId::to_string).collect();
            format!("{} [{}]", f.statement, docs.join(", "))
        })
        .collect();
    let right: Vec<String> = result
        .conclusions
        .iter()
        .map(|c| format!("{} ({:.2}) {}", c.statement, c.confidence, c.trace_id))
        .collect();
    let width = left.iter().map(|s| s.chars().count()).chain([5]).max().unwrap_or(5);

    let mut out = String::new();
    let _ = writeln!(out, "{:<width$} | CONCLUSIONS", "FACTS");
    let _ = writeln!(out, "{}-+-{}", "-".repeat(width), "-".repeat(11));
    for i in 0..left.len().max(right.len()) {
        let l = left.get(i).map(String::as_str).unwrap_or("");
        let r = right.get(i).map(String::as_str).unwrap_or("");
        let _ = writeln!(out, "{l:<width$} | {r}");
    }
    if !result.hits.is_empty() {
        let _ = writeln!(out, "\nHITS");
        for (rank, hit) in result.hits.iter().enumerate() {
            let title = corpus
                .and_then(|c| c.document(hit.doc_id))
                .map(|d| d.title.as_str())
                .unwrap_or("");
            let _ = writeln!(out, "{:>3}. {} {:.3} {}", rank + 1, hit.doc_id, hit.score, title);
        }
    }
    out
}
