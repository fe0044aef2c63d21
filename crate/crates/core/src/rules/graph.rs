use std::collections::{BTreeMap, BTreeSet, HashMap};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::{Rule, RuleBase, RuleError, RuleId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleEdge {
    pub from: String,
    pub to: String,
    pub rule_id: RuleId,
}

/// A maximal path of single-condition rules whose interior terms are linked
/// by exactly one producer and one consumer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSegment {
    pub terms: Vec<String>,
    pub rule_ids: Vec<RuleId>,
}

impl ChainSegment {
    pub fn len(&self) -> usize {
        self.rule_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule_ids.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RuleGraph {
    rules: Vec<Rule>,
    by_id: HashMap<RuleId, usize>,
    nodes: BTreeSet<String>,
    edges: Vec<RuleEdge>,
    producers: BTreeMap<String, Vec<usize>>,
    consumers: BTreeMap<String, Vec<usize>>,
    segments: Vec<ChainSegment>,
}

impl RuleGraph {
    pub fn build(rules: &[Rule]) -> Self {
        let mut graph = RuleGraph {
            rules: rules.to_vec(),
            by_id: rules.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect(),
            nodes: BTreeSet::new(),
            edges: Vec::new(),
            producers: BTreeMap::new(),
            consumers: BTreeMap::new(),
            segments: Vec::new(),
        };
        for (i, rule) in rules.iter().enumerate() {
            graph.nodes.insert(rule.conclusion.clone());
            graph.producers.entry(rule.conclusion.clone()).or_default().push(i);
            for cond in &rule.conditions {
                graph.nodes.insert(cond.clone());
                graph.consumers.entry(cond.clone()).or_default().push(i);
                graph.edges.push(RuleEdge {
                    from: cond.clone(),
                    to: rule.conclusion.clone(),
                    rule_id: rule.id.clone(),
                });
            }
        }
        graph.segments = graph.find_segments();
        graph
    }

    fn find_segments(&self) -> Vec<ChainSegment> {
        let mut segments = Vec::new();
        for (start, rule) in self.rules.iter().enumerate() {
            if rule.conditions.len() != 1 || self.is_interior(&rule.conditions[0]) {
                continue;
            }
            let mut terms = vec![rule.conditions[0].clone(), rule.conclusion.clone()];
            let mut ids = vec![rule.id.clone()];
            let mut visited = BTreeSet::from([start]);
            let mut current = &rule.conclusion;
            while self.is_interior(current) {
                let next = self.consumers[current][0];
                if !visited.insert(next) {
                    break;
                }
                let r = &self.rules[next];
                terms.push(r.conclusion.clone());
                ids.push(r.id.clone());
                current = &r.conclusion;
            }
            segments.push(ChainSegment { terms, rule_ids: ids });
        }
        segments
    }

    /// A term linking exactly one single-condition producer to exactly one
    /// single-condition consumer.
    pub fn is_interior(&self, term: &str) -> bool {
        match (
            self.producers.get(term).map(Vec::as_slice),
            self.consumers.get(term).map(Vec::as_slice),
        ) {
            (Some(&[p]), Some(&[c])) => {
                p != c && self.rules[p].conditions.len() == 1 && self.rules[c].conditions.len() == 1
            }
            _ => false,
        }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, id: &RuleId) -> Option<&Rule> {
        self.by_id.get(id).map(|&i| &self.rules[i])
    }

    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn edges(&self) -> &[RuleEdge] {
        &self.edges
    }

    pub fn chain_segments(&self) -> &[ChainSegment] {
        &self.segments
    }

    /// Rules concluding `term`.
    pub fn producers(&self, term: &str) -> impl Iterator<Item = &Rule> {
        self.producers.get(term).into_iter().flatten().map(|&i| &self.rules[i])
    }

    /// Rules with `term` among their conditions.
    pub fn consumers(&self, term: &str) -> impl Iterator<Item = &Rule> {
        self.consumers.get(term).into_iter().flatten().map(|&i| &self.rules[i])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Groups of rules with identical conditions and conclusion.
    pub duplicates: Vec<Vec<RuleId>>,
    /// Strongly connected term sets of size > 1.
    pub cycles: Vec<Vec<String>>,
}

impl ValidationReport {
    pub fn warnings(&self) -> Vec<String> {
        let dup = self.duplicates.iter().map(|group| {
            let ids: Vec<_> = group.iter().map(|id| id.0.as_str()).collect();
            format!("duplicate rules: {}", ids.join(", "))
        });
        let cyc = self
            .cycles
            .iter()
            .map(|terms| format!("cycle through: {}", terms.join(" -> ")));
        dup.chain(cyc).collect()
    }

    pub fn is_clean(&self) -> bool {
        self.duplicates.is_empty() && self.cycles.is_empty()
    }
}

/// Rejects self-loops; reports duplicates and cycles.
pub fn validate(base: &RuleBase) -> Result<ValidationReport, RuleError> {
    for rule in base.rules() {
        if rule.conditions.contains(&rule.conclusion) {
            return Err(RuleError::SelfLoop {
                rule_id: rule.id.clone(),
                term: rule.conclusion.clone(),
            });
        }
    }

    let mut groups: BTreeMap<(BTreeSet<&str>, &str), Vec<RuleId>> = BTreeMap::new();
    for rule in base.rules() {
        let key = (
            rule.conditions.iter().map(String::as_str).collect(),
            rule.conclusion.as_str(),
        );
        groups.entry(key).or_default().push(rule.id.clone());
    }
    let duplicates = groups.into_values().filter(|g| g.len() > 1).collect();

    let mut graph = DiGraph::<&str, ()>::new();
    let mut index = BTreeMap::new();
    for rule in base.rules() {
        for term in rule.conditions.iter().chain([&rule.conclusion]) {
            index
                .entry(term.as_str())
                .or_insert_with(|| graph.add_node(term.as_str()));
        }
        for cond in &rule.conditions {
            graph.add_edge(index[cond.as_str()], index[rule.conclusion.as_str()], ());
        }
    }
    let mut cycles: Vec<Vec<String>> = tarjan_scc(&graph)
        .into_iter()
        .filter(|scc| scc.len() > 1)
        .map(|scc| {
            let mut terms: Vec<String> = scc.iter().map(|&n| graph[n].to_string()).collect();
            terms.sort();
            terms
        })
        .collect();
    cycles.sort();

    Ok(ValidationReport { duplicates, cycles })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(text: &str) -> RuleBase {
        RuleBase::parse(text, "test").unwrap()
    }

    #[test]
    fn two_cycle_is_reported_not_rejected() {
        let report = validate(&base("IF a THEN b\nIF b THEN a\n")).unwrap();
        assert_eq!(report.cycles, vec![vec!["a".to_string(), "b".to_string()]]);
        assert!(report.duplicates.is_empty());
    }

    #[test]
    fn self_loop_is_rejected() {
        assert!(matches!(
            validate(&base("IF a THEN a")),
            Err(RuleError::SelfLoop { .. })
        ));
    }

    #[test]
    fn duplicates_reported() {
        let report = validate(&base("IF a AND b THEN c\nIF b AND a THEN c [0.5]\n")).unwrap();
        assert_eq!(report.duplicates, vec![vec![RuleId::from("R1"), RuleId::from("R2")]]);
        assert_eq!(report.warnings(), ["duplicate rules: R1, R2"]);
    }

    #[test]
    fn four_rule_chain_is_one_segment() {
        let b = base("IF a THEN b\nIF b THEN c\nIF c THEN d\nIF d THEN e\n");
        assert!(validate(&b).unwrap().is_clean());
        let g = RuleGraph::build(b.rules());
        assert_eq!(g.chain_segments().len(), 1);
        let seg = &g.chain_segments()[0];
        assert_eq!(seg.terms, ["a", "b", "c", "d", "e"]);
        assert_eq!(seg.len(), 4);
    }

    #[test]
    fn branching_does_not_merge_segments() {
        let g = RuleGraph::build(base("IF car THEN transportation\nIF car THEN race\n").rules());
        assert_eq!(g.edges().iter().filter(|e| e.from == "car").count(), 2);
        let segs: Vec<_> = g.chain_segments().iter().map(|s| s.terms.clone()).collect();
        assert_eq!(segs, vec![vec!["car", "transportation"], vec!["car", "race"]]);
    }

    #[test]
    fn car_rules_form_two_chains() {
        let g = RuleGraph::build(
            base(
                "IF car THEN used for transportation\nIF car THEN used in race\n\
                 IF used for transportation THEN logistics\nIF used in race THEN car is special\n",
            )
            .rules(),
        );
        let segs: Vec<_> = g.chain_segments().iter().map(|s| s.rule_ids.clone()).collect();
        assert_eq!(
            segs,
            vec![
                vec![RuleId::from("R1"), RuleId::from("R3")],
                vec![RuleId::from("R2"), RuleId::from("R4")]
            ]
        );
    }

    #[test]
    fn multi_condition_rules_break_chains() {
        let g = RuleGraph::build(base("IF a THEN b\nIF b AND x THEN c\nIF c THEN d\n").rules());
        let segs: Vec<_> = g.chain_segments().iter().map(|s| s.terms.clone()).collect();
        assert_eq!(segs, vec![vec!["a", "b"], vec!["c", "d"]]);
        assert_eq!(g.edges().len(), 4);
    }

    #[test]
    fn empty_graph() {
        let g = RuleGraph::build(&[]);
        assert!(g.nodes().is_empty() && g.edges().is_empty() && g.chain_segments().is_empty());
    }
}
