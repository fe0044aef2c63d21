#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use kwexpert_core::inference::Fact;
use kwexpert_core::rules::{Rule, RuleBase};
use proptest::prelude::*;

pub const TERMS: [&str; 8] = ["t0", "t1", "t2", "t3", "t4", "t5", "t6", "t7"];

/// Brute-force fixpoint: apply every rule until nothing new appears.
pub fn closure(initial: &BTreeSet<String>, rules: &[Rule]) -> BTreeSet<String> {
    let mut known = initial.clone();
    loop {
        let before = known.len();
        for rule in rules {
            if rule.conditions.iter().all(|c| known.contains(c)) {
                known.insert(rule.conclusion.clone());
            }
        }
        if known.len() == before {
            return known;
        }
    }
}

fn rule_strategy() -> impl Strategy<Value = (Vec<usize>, usize, u32)> {
    let width = prop_oneof![7 => Just(1usize), 3 => 2usize..=3];
    (
        width.prop_flat_map(|w| proptest::collection::btree_set(0..TERMS.len(), w)),
        0..TERMS.len(),
        1u32..=20,
    )
        .prop_filter_map("conclusion must not be a condition", |(conds, concl, conf)| {
            (!conds.contains(&concl)).then(|| (conds.into_iter().collect(), concl, conf))
        })
}

/// Up to 12 rules over 8 terms with confidences in (0, 1].
pub fn rule_base() -> impl Strategy<Value = RuleBase> {
    proptest::collection::vec(rule_strategy(), 0..=12).prop_map(|specs| {
        let rules = specs
            .into_iter()
            .enumerate()
            .map(|(i, (conds, concl, conf))| {
                let conditions: Vec<&str> = conds.iter().map(|&c| TERMS[c]).collect();
                Rule::new(
                    format!("R{}", i + 1),
                    &conditions,
                    TERMS[concl],
                    f64::from(conf) / 20.0,
                    i + 1,
                )
            })
            .collect();
        RuleBase::new(rules).expect("generated rules are valid")
    })
}

pub fn initial_facts() -> impl Strategy<Value = BTreeSet<String>> {
    proptest::collection::btree_set(proptest::sample::select(TERMS.to_vec()), 0..=4)
        .prop_map(|set| set.into_iter().map(str::to_string).collect())
}

pub fn as_facts(set: &BTreeSet<String>) -> Vec<Fact> {
    set.iter().map(|s| Fact::asserted(s.clone(), 1.0)).collect()
}

/// Symmetric random co-occurrence relation over the term pool.
pub fn cooccurrence() -> impl Strategy<Value = BTreeMap<String, BTreeSet<String>>> {
    proptest::collection::vec((0..TERMS.len(), 0..TERMS.len()), 0..10).prop_map(|pairs| {
        let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (a, b) in pairs.into_iter().filter(|(a, b)| a != b) {
            map.entry(TERMS[a].to_string())
                .or_default()
                .insert(TERMS[b].to_string());
            map.entry(TERMS[b].to_string())
                .or_default()
                .insert(TERMS[a].to_string());
        }
        map
    })
}
