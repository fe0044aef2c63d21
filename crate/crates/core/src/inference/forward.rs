use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{rank_activations, Activation, Fact, Provenance, Strategy, Trace, TraceInput, TraceStep};
use crate::rules::{Rule, RuleId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiringInput {
    pub statement: String,
    pub confidence: f64,
    /// Firing that produced the input, if any.
    pub from: Option<usize>,
}

/// One rule firing in a forward run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Firing {
    pub rule_id: RuleId,
    pub rule_text: String,
    pub inputs: Vec<FiringInput>,
    pub output: String,
    pub confidence: f64,
    pub depth: usize,
    #[serde(skip)]
    ancestors: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub fact: Fact,
    pub depth: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkingMemory {
    pub facts: BTreeMap<String, MemoryEntry>,
    pub fired: BTreeSet<RuleId>,
    /// Activations still pending when the run stopped (depth-limited ones
    /// are never pending).
    pub agenda: Vec<Activation>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForwardOutcome {
    pub memory: WorkingMemory,
    pub firings: Vec<Firing>,
}

impl ForwardOutcome {
    pub fn statements(&self) -> BTreeSet<String> {
        self.memory.facts.keys().cloned().collect()
    }

    pub fn fact(&self, statement: &str) -> Option<&Fact> {
        self.memory.facts.get(statement).map(|e| &e.fact)
    }

    /// Facts whose surviving derivation came from a rule.
    pub fn derived_facts(&self) -> impl Iterator<Item = &Fact> {
        self.memory.facts.values().map(|e| &e.fact).filter(|f| f.is_derived())
    }

    /// Rule ids in firing order.
    pub fn fired_rules(&self) -> impl Iterator<Item = &RuleId> {
        self.firings.iter().map(|f| &f.rule_id)
    }

    /// Explanation for a derived statement.
    pub fn trace(&self, statement: &str) -> Option<Trace> {
        match self.fact(statement)?.provenance {
            Provenance::Derived { firing } => Some(self.trace_of_firing(firing)),
            _ => None,
        }
    }

    fn trace_of_firing(&self, index: usize) -> Trace {
        let root = &self.firings[index];
        let order: Vec<usize> = root.ancestors.iter().copied().chain([index]).collect();
        let local: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &f)| (f, i)).collect();
        let steps = order
            .iter()
            .map(|&f| {
                let firing = &self.firings[f];
                TraceStep {
                    rule_id: firing.rule_id.clone(),
                    rule_text: firing.rule_text.clone(),
                    inputs: firing
                        .inputs
                        .iter()
                        .map(|i| TraceInput {
                            statement: i.statement.clone(),
                            confidence: i.confidence,
                            step: i.from.map(|f| local[&f]),
                        })
                        .collect(),
                    output: firing.output.clone(),
                    confidence: firing.confidence,
                }
            })
            .collect();
        Trace::new(root.output.clone(), root.confidence, steps)
    }

    fn trace_len(&self, fact: &Fact) -> usize {
        match fact.provenance {
            Provenance::Derived { firing } => self.firings[firing].ancestors.len() + 1,
            _ => 0,
        }
    }
}

/// Data-driven inference with one firing per recognize-act cycle.
///
/// Each rule fires at most once. A derived statement sits at depth
/// `1 + max(depth of its conditions)` and activations deeper than
/// `max_depth` are never fired. Derived confidence is the rule confidence
/// times the weakest condition; a re-derivation replaces the stored fact only
/// with a higher confidence, or an equal one with a shorter trace.
pub fn forward_chain(initial: &[Fact], rules: &[Rule], strategy: Strategy, max_depth: usize) -> ForwardOutcome {
    let mut out = ForwardOutcome::default();
    for fact in initial {
        let keep = match out.memory.facts.get(&fact.statement) {
            Some(existing) => fact.confidence > existing.fact.confidence,
            None => true,
        };
        if keep {
            out.memory.facts.insert(
                fact.statement.clone(),
                MemoryEntry {
                    fact: fact.clone(),
                    depth: 0,
                },
            );
        }
    }

    loop {
        let agenda: Vec<Activation> = rules
            .iter()
            .enumerate()
            .filter(|(_, r)| !out.memory.fired.contains(&r.id))
            .filter_map(|(position, rule)| {
                let mut depth = 0;
                for cond in &rule.conditions {
                    depth = depth.max(out.memory.facts.get(cond)?.depth);
                }
                (depth < max_depth).then(|| Activation {
                    rule_id: rule.id.clone(),
                    order_index: rule.order_index,
                    condition_count: rule.conditions.len(),
                    position,
                    depth: depth + 1,
                })
            })
            .collect();
        let mut agenda = rank_activations(agenda, strategy);
        if agenda.is_empty() {
            break;
        }
        let next = agenda.remove(0);
        out.memory.agenda = agenda;
        fire(&mut out, &rules[next.position], next.depth);
    }
    out
}

fn fire(out: &mut ForwardOutcome, rule: &Rule, depth: usize) {
    let mut inputs = Vec::with_capacity(rule.conditions.len());
    let mut ancestors = BTreeSet::new();
    for cond in &rule.conditions {
        let entry = &out.memory.facts[cond];
        let from = match entry.fact.provenance {
            Provenance::Derived { firing } => {
                ancestors.insert(firing);
                ancestors.extend(out.firings[firing].ancestors.iter().copied());
                Some(firing)
            }
            _ => None,
        };
        inputs.push(FiringInput {
            statement: cond.clone(),
            confidence: entry.fact.confidence,
            from,
        });
    }
    let weakest = inputs.iter().map(|i| i.confidence).fold(f64::INFINITY, f64::min);
    let confidence = rule.confidence * weakest;
    let index = out.firings.len();
    let trace_len = ancestors.len() + 1;
    out.firings.push(Firing {
        rule_id: rule.id.clone(),
        rule_text: rule.to_string(),
        inputs,
        output: rule.conclusion.clone(),
        confidence,
        depth,
        ancestors,
    });
    out.memory.fired.insert(rule.id.clone());

    let replace = match out.memory.facts.get(&rule.conclusion) {
        None => true,
        Some(existing) => {
            confidence > existing.fact.confidence
                || (confidence == existing.fact.confidence && trace_len < out.trace_len(&existing.fact))
        }
    };
    if replace {
        out.memory.facts.insert(
            rule.conclusion.clone(),
            MemoryEntry {
                fact: Fact {
                    statement: rule.conclusion.clone(),
                    confidence,
                    provenance: Provenance::Derived { firing: index },
                },
                depth,
            },
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::parse_rules;

    fn run(facts: &[(&str, f64)], rules: &str, depth: usize) -> ForwardOutcome {
        let facts: Vec<Fact> = facts.iter().map(|(s, c)| Fact::asserted(*s, *c)).collect();
        forward_chain(&facts, &parse_rules(rules, "t").unwrap(), Strategy::RuleOrder, depth)
    }

    fn derived(out: &ForwardOutcome) -> Vec<&str> {
        out.derived_facts().map(|f| f.statement.as_str()).collect()
    }

    #[test]
    fn chain_closes() {
        let out = run(
            &[("a", 1.0)],
            "IF a THEN b\nIF b THEN c\nIF c THEN d\nIF d THEN e\n",
            10,
        );
        assert_eq!(derived(&out), ["b", "c", "d", "e"]);
        let trace = out.trace("e").unwrap();
        assert_eq!(trace.steps.len(), 4);
        assert_eq!(trace.leaves().collect::<Vec<_>>(), ["a"]);
    }

    #[test]
    fn conjunction_fires() {
        let out = run(
            &[("wings", 1.0), ("engine", 1.0), ("chassis", 1.0)],
            "IF wings AND engine AND chassis THEN plane",
            8,
        );
        assert_eq!(derived(&out), ["plane"]);
    }

    #[test]
    fn confidence_is_product_of_rule_and_weakest_input() {
        let out = run(&[("a", 1.0)], "IF a THEN b [0.8]\nIF b THEN c [0.9]\n", 8);
        assert_eq!(out.fact("c").unwrap().confidence, 0.8 * 0.9);
        let out = run(&[("a", 0.5), ("b", 0.9)], "IF a AND b THEN c [0.5]", 8);
        assert_eq!(out.fact("c").unwrap().confidence, 0.25);
    }

    #[test]
    fn cycles_terminate() {
        let out = run(&[("a", 1.0)], "IF a THEN b\nIF b THEN a\n", 8);
        assert_eq!(derived(&out), ["b"]);
        assert_eq!(out.firings.len(), 2);
        assert_eq!(out.fact("a").unwrap().provenance, Provenance::Asserted);
    }

    #[test]
    fn depth_limit_stops_chain() {
        let out = run(&[("a", 1.0)], "IF a THEN b\nIF b THEN c\nIF c THEN d\n", 2);
        assert_eq!(derived(&out), ["b", "c"]);
    }

    #[test]
    fn higher_confidence_rederivation_wins() {
        let out = run(&[("a", 1.0)], "IF a THEN x [0.3]\nIF a THEN x [0.6]\n", 8);
        let x = out.fact("x").unwrap();
        assert_eq!(x.confidence, 0.6);
        assert_eq!(out.trace("x").unwrap().steps[0].rule_id, RuleId::from("R2"));
    }

    #[test]
    fn empty_inputs_derive_nothing() {
        assert!(run(&[], "IF a THEN b", 8).firings.is_empty());
        assert!(run(&[("a", 1.0)], "", 8).firings.is_empty());
    }
}
