use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::{Fact, Trace, TraceInput, TraceStep};
use crate::corpus::normalize_phrase;
use crate::rules::Rule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proof {
    pub goal: String,
    pub depth: usize,
    pub confidence: f64,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofFailure {
    pub goal: String,
    /// Leaf conditions reachable from the goal that are neither facts nor
    /// concluded by any rule.
    pub missing: BTreeSet<String>,
    /// A proof exists but is deeper than the limit.
    pub depth_limited: bool,
}

#[derive(Debug)]
struct Node {
    statement: String,
    confidence: f64,
    depth: usize,
    rule: Option<usize>,
    children: Vec<Rc<Node>>,
}

struct Prover<'a> {
    facts: BTreeMap<&'a str, f64>,
    rules: &'a [Rule],
    producers: HashMap<&'a str, Vec<usize>>,
    memo: HashMap<(String, usize), Option<Rc<Node>>>,
}

impl<'a> Prover<'a> {
    fn new(facts: &'a [Fact], rules: &'a [Rule]) -> Self {
        let mut best: BTreeMap<&str, f64> = BTreeMap::new();
        for f in facts {
            let slot = best.entry(f.statement.as_str()).or_insert(f.confidence);
            *slot = slot.max(f.confidence);
        }
        let mut producers: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, r) in rules.iter().enumerate() {
            producers.entry(r.conclusion.as_str()).or_default().push(i);
        }
        for list in producers.values_mut() {
            list.sort_by_key(|&i| (rules[i].order_index, i));
        }
        Prover {
            facts: best,
            rules,
            producers,
            memo: HashMap::new(),
        }
    }

    /// Some proof of depth at most `budget`.
    fn prove(&mut self, statement: &str, budget: usize) -> Option<Rc<Node>> {
        if let Some(&confidence) = self.facts.get(statement) {
            return Some(Rc::new(Node {
                statement: statement.to_string(),
                confidence,
                depth: 0,
                rule: None,
                children: Vec::new(),
            }));
        }
        if budget == 0 {
            return None;
        }
        let key = (statement.to_string(), budget);
        if let Some(hit) = self.memo.get(&key) {
            return hit.clone();
        }
        let candidates = self.producers.get(statement).cloned().unwrap_or_default();
        let mut found = None;
        'rules: for i in candidates {
            let rule = &self.rules[i];
            let mut children = Vec::with_capacity(rule.conditions.len());
            for cond in &rule.conditions {
                match self.prove(cond, budget - 1) {
                    Some(node) => children.push(node),
                    None => continue 'rules,
                }
            }
            let weakest = children.iter().map(|c| c.confidence).fold(f64::INFINITY, f64::min);
            found = Some(Rc::new(Node {
                statement: statement.to_string(),
                confidence: rule.confidence * weakest,
                depth: 1 + children.iter().map(|c| c.depth).max().unwrap_or(0),
                rule: Some(i),
                children,
            }));
            break;
        }
        self.memo.insert(key, found.clone());
        found
    }

    fn trace(&self, root: &Rc<Node>) -> Trace {
        let mut steps = Vec::new();
        let mut placed: HashMap<*const Node, usize> = HashMap::new();
        self.emit(root, &mut steps, &mut placed);
        Trace::new(root.statement.clone(), root.confidence, steps)
    }

    fn emit(
        &self,
        node: &Rc<Node>,
        steps: &mut Vec<TraceStep>,
        placed: &mut HashMap<*const Node, usize>,
    ) -> Option<usize> {
        let rule = &self.rules[node.rule?];
        if let Some(&at) = placed.get(&Rc::as_ptr(node)) {
            return Some(at);
        }
        let inputs = node
            .children
            .iter()
            .map(|child| TraceInput {
                statement: child.statement.clone(),
                confidence: child.confidence,
                step: self.emit(child, steps, placed),
            })
            .collect();
        steps.push(TraceStep {
            rule_id: rule.id.clone(),
            rule_text: rule.to_string(),
            inputs,
            output: node.statement.clone(),
            confidence: node.confidence,
        });
        placed.insert(Rc::as_ptr(node), steps.len() - 1);
        Some(steps.len() - 1)
    }

    fn missing_leaves(&self, goal: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::from([goal.to_string()]);
        let mut queue = VecDeque::from([goal.to_string()]);
        let mut missing = BTreeSet::new();
        while let Some(term) = queue.pop_front() {
            if self.facts.contains_key(term.as_str()) {
                continue;
            }
            let Some(producers) = self.producers.get(term.as_str()) else {
                missing.insert(term);
                continue;
            };
            for &i in producers {
                for cond in &self.rules[i].conditions {
                    if seen.insert(cond.clone()) {
                        queue.push_back(cond.clone());
                    }
                }
            }
        }
        missing
    }
}

/// Goal-driven search for a minimal-depth proof, by iterative deepening.
pub fn backward_chain(goal: &str, facts: &[Fact], rules: &[Rule], max_depth: usize) -> Result<Proof, ProofFailure> {
    let goal = normalize_phrase(goal);
    let mut prover = Prover::new(facts, rules);
    for budget in 0..=max_depth {
        if let Some(root) = prover.prove(&goal, budget) {
            return Ok(Proof {
                goal,
                depth: root.depth,
                confidence: root.confidence,
                trace: prover.trace(&root),
            });
        }
    }
    // Along a minimal proof no rule repeats on a path, so |rules| bounds depth.
    let depth_limited = max_depth < rules.len() && prover.prove(&goal, rules.len()).is_some();
    Err(ProofFailure {
        missing: prover.missing_leaves(&goal),
        goal,
        depth_limited,
    })
}
