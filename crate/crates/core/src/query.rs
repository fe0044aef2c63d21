//! User requests, positional priorities and session history linkage.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, CooccurrenceSource};

pub const DEFAULT_HISTORY_LEN: usize = 20;
pub const DEFAULT_THETA: f64 = 0.2;
pub const DEFAULT_DECAY: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("empty request")]
    EmptyRequest,
    #[error("invalid weight `{0}`: expected a number in (0, 1]")]
    InvalidWeight(String),
    #[error("unknown direction `{0}`")]
    UnknownDirection(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    LeftToRight,
    RightToLeft,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::LeftToRight => "left_to_right",
            Direction::RightToLeft => "right_to_left",
        })
    }
}

impl FromStr for Direction {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left_to_right" | "ltr" => Ok(Direction::LeftToRight),
            "right_to_left" | "rtl" => Ok(Direction::RightToLeft),
            other => Err(QueryError::UnknownDirection(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Typed,
    History,
}

/// A keyword and its attribute record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub term: String,
    pub priority_weight: f64,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRequest {
    pub raw: String,
    pub direction: Direction,
    /// Keywords in priority order, highest first.
    pub keywords: Vec<Keyword>,
}

impl UserRequest {
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.keywords.iter().map(|k| k.term.as_str())
    }

    pub fn weighted_terms(&self) -> BTreeMap<String, f64> {
        self.keywords
            .iter()
            .map(|k| (k.term.clone(), k.priority_weight))
            .collect()
    }
}

/// Parses whitespace-separated terms with an optional `^weight` suffix.
///
/// Keyword `i` in priority order gets weight `1/(i+1)` unless it carries an
/// explicit weight. Repeated terms keep their highest-priority occurrence.
pub fn parse_request(raw: &str, direction: Direction) -> Result<UserRequest, QueryError> {
    let mut typed: Vec<(String, Option<f64>)> = Vec::new();
    for chunk in raw.split_whitespace() {
        let (text, explicit) = match chunk.rsplit_once('^') {
            Some((text, weight)) => {
                let w: f64 = weight
                    .parse()
                    .map_err(|_| QueryError::InvalidWeight(weight.to_string()))?;
                if !(w > 0.0 && w <= 1.0) {
                    return Err(QueryError::InvalidWeight(weight.to_string()));
                }
                (text, Some(w))
            }
            None => (chunk, None),
        };
        typed.extend(tokenize(text).into_iter().map(|t| (t, explicit)));
    }
    if direction == Direction::RightToLeft {
        typed.reverse();
    }

    let mut seen = BTreeSet::new();
    let keywords: Vec<Keyword> = typed
        .into_iter()
        .filter(|(t, _)| seen.insert(t.clone()))
        .enumerate()
        .map(|(rank, (term, explicit))| Keyword {
            term,
            priority_weight: explicit.unwrap_or(1.0 / (rank as f64 + 1.0)),
            origin: Origin::Typed,
        })
        .collect();
    if keywords.is_empty() {
        return Err(QueryError::EmptyRequest);
    }
    Ok(UserRequest {
        raw: raw.to_string(),
        direction,
        keywords,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub request: UserRequest,
    /// Terms of the statements returned for the request.
    pub result_terms: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub created_at: u64,
    capacity: usize,
    history: VecDeque<HistoryEntry>,
}

impl Session {
    pub fn new(session_id: impl Into<String>, created_at: u64) -> Self {
        Self::with_capacity(session_id, created_at, DEFAULT_HISTORY_LEN)
    }

    pub fn with_capacity(session_id: impl Into<String>, created_at: u64, capacity: usize) -> Self {
        Self {
            session_id: session_id.into(),
            created_at,
            capacity: capacity.max(1),
            history: VecDeque::new(),
        }
    }

    pub fn push(&mut self, entry: HistoryEntry) {
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back(entry);
    }

    pub fn history(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.history.iter()
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryEntry> {
        self.history.back()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveQuery {
    pub weighted_terms: BTreeMap<String, f64>,
    pub linked_from_history: BTreeSet<String>,
    /// Link score against the previous request, when there was one.
    pub link_score: Option<f64>,
}

impl EffectiveQuery {
    pub fn standalone(request: &UserRequest) -> Self {
        Self {
            weighted_terms: request.weighted_terms(),
            linked_from_history: BTreeSet::new(),
            link_score: None,
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.weighted_terms.keys().map(String::as_str)
    }
}

/// Adds every co-occurring neighbour of every term.
pub fn expand_terms<'a>(terms: impl IntoIterator<Item = &'a str>, oracle: &dyn CooccurrenceSource) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for term in terms {
        out.extend(oracle.cooccurring(term));
        out.insert(term.to_string());
    }
    out
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Jaccard similarity of the co-occurrence expanded term sets of two
/// consecutive requests.
pub fn history_link_score(prev: &HistoryEntry, current: &UserRequest, oracle: &dyn CooccurrenceSource) -> f64 {
    let prev_terms = prev.request.terms().chain(prev.result_terms.iter().map(String::as_str));
    let prev_set = expand_terms(prev_terms, oracle);
    let current_set = expand_terms(current.terms(), oracle);
    jaccard(&prev_set, &current_set)
}

/// Merges the previous request's keywords into `current` when the two are
/// linked (score at least `theta`). Inherited weights are decayed and capped
/// at the lowest typed weight; typed terms win on conflict.
pub fn effective_query(
    session: &Session,
    current: &UserRequest,
    theta: f64,
    decay: f64,
    oracle: &dyn CooccurrenceSource,
) -> EffectiveQuery {
    let mut query = EffectiveQuery::standalone(current);
    let Some(prev) = session.last() else {
        return query;
    };
    let score = history_link_score(prev, current, oracle);
    query.link_score = Some(score);
    if score < theta {
        return query;
    }
    let floor = current
        .keywords
        .iter()
        .map(|k| k.priority_weight)
        .fold(f64::INFINITY, f64::min);
    for kw in &prev.request.keywords {
        if query.weighted_terms.contains_key(&kw.term) {
            continue;
        }
        query
            .weighted_terms
            .insert(kw.term.clone(), (kw.priority_weight * decay).min(floor));
        query.linked_from_history.insert(kw.term.clone());
    }
    query
}
