//! Chain compression and per-query compiled rule sets.
//!
//! A compiled set is an overlay for one normalized keyword set: the rule base
//! itself is never modified.

mod cache;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::corpus::normalize_phrase;
use crate::inference::{relevance_filter, SemanticArea};
use crate::query::Direction;
use crate::rules::{Rule, RuleBase, RuleGraph, RuleId};

pub use cache::{CacheError, CacheStats, RuleCache, DEFAULT_CAPACITY};

pub const COMPILED_FORMAT_VERSION: u32 = 1;

/// One rule standing in for a chain of rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedRule {
    pub rule_id: RuleId,
    pub conditions: Vec<String>,
    pub conclusion: String,
    pub confidence: f64,
    pub order_index: usize,
    pub member_rule_ids: Vec<RuleId>,
}

impl CompressedRule {
    fn from_members(members: &[&Rule]) -> Self {
        let head = members[0];
        let ids: Vec<RuleId> = members.iter().map(|r| r.id.clone()).collect();
        CompressedRule {
            rule_id: RuleId(ids.iter().map(|id| id.0.as_str()).collect::<Vec<_>>().join("+")),
            conditions: head.conditions.clone(),
            conclusion: members[members.len() - 1].conclusion.clone(),
            confidence: members.iter().map(|r| r.confidence).fold(1.0, |acc, c| acc * c),
            order_index: head.order_index,
            member_rule_ids: ids,
        }
    }

    pub fn to_rule(&self) -> Rule {
        Rule {
            id: self.rule_id.clone(),
            conditions: self.conditions.clone(),
            conclusion: self.conclusion.clone(),
            confidence: self.confidence,
            order_index: self.order_index,
            source: "compressed".to_string(),
        }
    }
}

/// Compresses chain segments against the query area.
///
/// Each segment (optionally headed by the sole, multi-condition producer of
/// its first term) is cut after every conclusion scoring at least `tau`.
/// Every resulting piece of two or more rules that ends on such a conclusion
/// becomes one [`CompressedRule`]. A segment whose conclusions all clear
/// `tau` is left alone, and trailing pieces without a relevant endpoint are
/// never compressed.
pub fn compress_chains(graph: &RuleGraph, area: &SemanticArea<'_>, tau: f64) -> Vec<CompressedRule> {
    let mut out = Vec::new();
    for segment in graph.chain_segments() {
        let mut members: Vec<&Rule> = segment
            .rule_ids
            .iter()
            .map(|id| graph.rule(id).expect("segment rules come from the graph"))
            .collect();

        let head_term = &segment.terms[0];
        let producers: Vec<&Rule> = graph.producers(head_term).collect();
        if let [producer] = producers.as_slice() {
            if producer.conditions.len() > 1 && graph.consumers(head_term).count() == 1 {
                members.insert(0, producer);
            }
        }

        let mut start = 0;
        for (i, rule) in members.iter().enumerate() {
            if !area.is_relevant(&rule.conclusion, tau) {
                continue;
            }
            let piece = &members[start..=i];
            if piece.len() >= 2 && !piece[0].conditions.contains(&rule.conclusion) {
                out.push(CompressedRule::from_members(piece));
            }
            start = i + 1;
        }
    }
    out
}

/// Order-insensitive cache key: sorted, deduplicated, normalized terms plus
/// the priority direction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub terms: Vec<String>,
    pub direction: Direction,
}

impl CacheKey {
    pub fn new<S: AsRef<str>>(terms: impl IntoIterator<Item = S>, direction: Direction) -> Self {
        let terms: BTreeSet<String> = terms
            .into_iter()
            .map(|t| normalize_phrase(t.as_ref()))
            .filter(|t| !t.is_empty())
            .collect();
        CacheKey {
            terms: terms.into_iter().collect(),
            direction,
        }
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.direction, self.terms.join(" "))
    }
}

/// What a compiled set must match to be reused.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStamp {
    pub rulebase_version: String,
    /// Everything besides the rules that shapes the area: corpus snapshot,
    /// co-occurrence settings, threshold.
    pub area_fingerprint: String,
}

impl CacheStamp {
    pub fn new(rulebase_version: &str, corpus_version: &str, window: usize, min_count: u32, tau: f64) -> Self {
        CacheStamp {
            rulebase_version: rulebase_version.to_string(),
            area_fingerprint: format!("{corpus_version}/w{window}/m{min_count}/tau{tau}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompiledRule {
    Rule(Rule),
    Compressed(CompressedRule),
}

impl CompiledRule {
    pub fn id(&self) -> &RuleId {
        match self {
            CompiledRule::Rule(r) => &r.id,
            CompiledRule::Compressed(c) => &c.rule_id,
        }
    }

    pub fn order_index(&self) -> usize {
        match self {
            CompiledRule::Rule(r) => r.order_index,
            CompiledRule::Compressed(c) => c.order_index,
        }
    }

    pub fn to_rule(&self) -> Rule {
        match self {
            CompiledRule::Rule(r) => r.clone(),
            CompiledRule::Compressed(c) => c.to_rule(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledRuleSet {
    pub format_version: u32,
    pub key: CacheKey,
    pub stamp: CacheStamp,
    /// Output of the relevance filter, before compression.
    pub enabled_rule_ids: Vec<RuleId>,
    pub rules: Vec<CompiledRule>,
    pub built_at: u64,
}

impl CompiledRuleSet {
    pub fn inference_rules(&self) -> Vec<Rule> {
        self.rules.iter().map(CompiledRule::to_rule).collect()
    }

    pub fn compressed(&self) -> impl Iterator<Item = &CompressedRule> {
        self.rules.iter().filter_map(|r| match r {
            CompiledRule::Compressed(c) => Some(c),
            CompiledRule::Rule(_) => None,
        })
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("compiled set serializes")
    }

    pub fn from_canonical_json(json: &str) -> Result<Self, CacheError> {
        let set: CompiledRuleSet = serde_json::from_str(json).map_err(|e| CacheError::Corrupt(e.to_string()))?;
        if set.format_version != COMPILED_FORMAT_VERSION {
            return Err(CacheError::Corrupt(format!(
                "unsupported format version {}",
                set.format_version
            )));
        }
        Ok(set)
    }
}

/// Relevance-filtered rules with eligible chains replaced by compressed
/// rules.
///
/// Every interior term of a compressed chain also gets a rule leading
/// straight to the chain endpoint (the last member rule itself when only one
/// step remains).
///
/// Rules that are not relevant themselves but produce a condition of a
/// selected rule are kept as support, so no relevant conclusion reachable in
/// the full rule base is lost.
pub fn compile_for_query(
    key: CacheKey,
    base: &RuleBase,
    area: &SemanticArea<'_>,
    tau: f64,
    stamp: CacheStamp,
) -> CompiledRuleSet {
    let rules = base.rules();
    let enabled = relevance_filter(rules, area, tau);
    let graph = RuleGraph::build(rules);
    let compressed = compress_chains(&graph, area, tau);
    let members: BTreeSet<&RuleId> = compressed.iter().flat_map(|c| &c.member_rule_ids).collect();

    // A fact may already hold an interior term of a compressed chain, so each
    // interior term keeps a direct route to the chain endpoint.
    let mut entries: Vec<CompiledRule> = Vec::new();
    for c in &compressed {
        let chain: Vec<&Rule> = c
            .member_rule_ids
            .iter()
            .map(|id| graph.rule(id).expect("members come from the graph"))
            .collect();
        for k in 1..chain.len() {
            let suffix = &chain[k..];
            if suffix.len() == 1 {
                entries.push(CompiledRule::Rule(suffix[0].clone()));
            } else {
                entries.push(CompiledRule::Compressed(CompressedRule::from_members(suffix)));
            }
        }
    }

    let mut chosen: BTreeSet<&RuleId> = enabled
        .iter()
        .map(|r| &r.id)
        .filter(|id| !members.contains(id))
        .collect();
    let mut pending: VecDeque<&str> = rules
        .iter()
        .filter(|r| chosen.contains(&r.id))
        .flat_map(|r| r.conditions.iter())
        .chain(compressed.iter().flat_map(|c| c.conditions.iter()))
        .map(String::as_str)
        .collect();
    let mut visited = BTreeSet::new();
    while let Some(term) = pending.pop_front() {
        if !visited.insert(term) {
            continue;
        }
        for producer in graph.producers(term) {
            if members.contains(&producer.id) || !chosen.insert(&producer.id) {
                continue;
            }
            pending.extend(producer.conditions.iter().map(String::as_str));
        }
    }

    let mut compiled: Vec<CompiledRule> = rules
        .iter()
        .filter(|r| chosen.contains(&r.id))
        .cloned()
        .map(CompiledRule::Rule)
        .chain(compressed.into_iter().map(CompiledRule::Compressed))
        .chain(entries)
        .collect();
    compiled.sort_by(|a, b| a.order_index().cmp(&b.order_index()).then_with(|| a.id().cmp(b.id())));

    CompiledRuleSet {
        format_version: COMPILED_FORMAT_VERSION,
        key,
        stamp,
        enabled_rule_ids: enabled.iter().map(|r| r.id.clone()).collect(),
        rules: compiled,
        built_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    type Oracle = BTreeMap<String, BTreeSet<String>>;

    fn chain(confidences: &[f64]) -> RuleBase {
        let terms = ["a", "b", "c", "d", "e", "f"];
        let rules = confidences
            .iter()
            .enumerate()
            .map(|(i, &c)| Rule::new(format!("R{}", i + 1), &[terms[i]], terms[i + 1], c, i + 1))
            .collect();
        RuleBase::new(rules).unwrap()
    }

    fn summary(list: &[CompressedRule]) -> Vec<String> {
        list.iter()
            .map(|c| format!("IF {} THEN {}", c.conditions.join(" AND "), c.conclusion))
            .collect()
    }

    fn compress(base: &RuleBase, area_terms: &[&str]) -> Vec<CompressedRule> {
        let oracle = Oracle::new();
        let area = SemanticArea::new(area_terms.iter().copied(), &oracle);
        compress_chains(&RuleGraph::build(base.rules()), &area, 0.5)
    }

    #[test]
    fn endpoint_follows_area() {
        let base = chain(&[1.0; 4]);
        assert_eq!(summary(&compress(&base, &["e"])), ["IF a THEN e"]);
        assert_eq!(summary(&compress(&base, &["d"])), ["IF a THEN d"]);
        assert!(compress(&base, &["z"]).is_empty());
    }

    #[test]
    fn fully_relevant_chain_is_not_compressed() {
        let oracle = Oracle::new();
        let area = SemanticArea::new(["q"], &oracle);
        let base = chain(&[1.0; 4]);
        assert!(compress_chains(&RuleGraph::build(base.rules()), &area, 0.0).is_empty());
    }

    #[test]
    fn compressed_confidence_is_product() {
        let base = chain(&[0.9, 0.8]);
        let out = compress(&base, &["c"]);
        assert_eq!(out.len(), 1);
        assert!((out[0].confidence - 0.72).abs() < 1e-12);
        assert_eq!(out[0].member_rule_ids, [RuleId::from("R1"), RuleId::from("R2")]);
        assert_eq!(out[0].rule_id, RuleId::from("R1+R2"));
    }

    #[test]
    fn multi_condition_rule_may_head_a_chain() {
        let base = RuleBase::parse("IF x AND y THEN h\nIF h THEN m\nIF m THEN goal\n", "t").unwrap();
        assert_eq!(summary(&compress(&base, &["goal"])), ["IF x AND y THEN goal"]);
    }

    #[test]
    fn relevant_interior_splits_the_chain() {
        let base = chain(&[1.0; 5]);
        let oracle = Oracle::new();
        let area = SemanticArea::new(["c", "f"], &oracle);
        // a, b, c, d, e, f: each of c and f scores 1/2.
        let out = compress_chains(&RuleGraph::build(base.rules()), &area, 0.5);
        assert_eq!(summary(&out), ["IF a THEN c", "IF c THEN f"]);
    }

    #[test]
    fn compile_keeps_support_rules() {
        let base = RuleBase::parse("IF a THEN x\nIF x AND y THEN goal\nIF a THEN noise\n", "t").unwrap();
        let oracle = Oracle::new();
        let area = SemanticArea::new(["goal"], &oracle);
        let key = CacheKey::new(["goal"], Direction::LeftToRight);
        let stamp = CacheStamp::new(base.version_hash(), "c", 4, 1, 0.5);
        let set = compile_for_query(key, &base, &area, 0.5, stamp);
        assert_eq!(set.enabled_rule_ids, [RuleId::from("R2")]);
        let ids: Vec<_> = set.rules.iter().map(|r| r.id().0.as_str()).collect();
        assert_eq!(ids, ["R1", "R2"]);
    }

    #[test]
    fn empty_rule_base_compiles_to_nothing() {
        let oracle = Oracle::new();
        let area = SemanticArea::new(["q"], &oracle);
        let base = RuleBase::empty();
        let stamp = CacheStamp::new(base.version_hash(), "c", 4, 1, 0.15);
        let set = compile_for_query(CacheKey::new(["q"], Direction::LeftToRight), &base, &area, 0.15, stamp);
        assert!(set.rules.is_empty());
    }

    #[test]
    fn key_is_order_insensitive() {
        let a = CacheKey::new(["Logistics", "car", "car"], Direction::LeftToRight);
        let b = CacheKey::new(["car", "logistics"], Direction::LeftToRight);
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "left_to_right:car logistics");
        assert_ne!(a, CacheKey::new(["car", "logistics"], Direction::RightToLeft));
    }
}
