use std::collections::BTreeMap;

use kwexpert_core::corpus::{tokenize, Corpus, DocId};
use kwexpert_core::rules::{parse_rules, serialize_rules, Rule};
use proptest::prelude::*;

const VOCAB: [&str; 6] = ["alpha", "beta", "gamma", "delta", "Alpha", "x1"];

fn doc_text() -> impl Strategy<Value = String> {
    proptest::collection::vec((proptest::sample::select(VOCAB.to_vec()), "[ ,.;!-]{1,2}"), 1..30)
        .prop_map(|parts| parts.into_iter().map(|(w, sep)| format!("{w}{sep}")).collect())
}

fn corpus(bodies: &[String]) -> Corpus {
    let mut c = Corpus::new();
    for (i, body) in bodies.iter().enumerate() {
        c.ingest_document(&format!("doc-{i}"), "", body).unwrap();
    }
    c
}

fn weights() -> impl Strategy<Value = BTreeMap<String, f64>> {
    // Multiples of 1/8 keep every sum exact.
    proptest::collection::btree_map(
        proptest::sample::select(vec!["alpha", "beta", "gamma", "delta", "x1", "absent"]),
        1u32..=8,
        1..4,
    )
    .prop_map(|m| {
        m.into_iter()
            .map(|(t, w)| (t.to_string(), f64::from(w) / 8.0))
            .collect()
    })
}

proptest! {
    #[test]
    fn tokenize_is_idempotent(text in "\\PC{0,60}") {
        let once = tokenize(&text);
        prop_assert_eq!(tokenize(&once.join(" ")), once.clone());
        for token in &once {
            prop_assert!(!token.is_empty());
            prop_assert!(token.chars().all(char::is_alphanumeric));
        }
    }

    #[test]
    fn postings_recount_tokens(bodies in proptest::collection::vec(doc_text(), 1..5)) {
        let c = corpus(&bodies);
        for (i, body) in bodies.iter().enumerate() {
            let tokens = tokenize(&format!("\n{body}"));
            let mut expected: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
            for (p, t) in tokens.iter().enumerate() {
                expected.entry(t).or_default().push(p as u32);
            }
            for (term, positions) in expected {
                let posting = c.posting(term, DocId(i as u32)).unwrap();
                prop_assert_eq!(posting.frequency as usize, positions.len());
                prop_assert_eq!(&posting.positions, &positions);
            }
        }
    }

    #[test]
    fn search_scores_match_oracle(bodies in proptest::collection::vec(doc_text(), 1..6), query in weights()) {
        let c = corpus(&bodies);
        let hits = c.search(&query).unwrap();
        let mut expected: Vec<(DocId, f64)> = Vec::new();
        for (i, body) in bodies.iter().enumerate() {
            let tokens = tokenize(body);
            let score: f64 = query
                .iter()
                .map(|(t, w)| w * tokens.iter().filter(|x| *x == t).count() as f64)
                .sum();
            if score > 0.0 {
                expected.push((DocId(i as u32), score));
            }
        }
        expected.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let got: Vec<(DocId, f64)> = hits.iter().map(|h| (h.doc_id, h.score)).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn raising_a_weight_never_lowers_a_score(
        bodies in proptest::collection::vec(doc_text(), 1..6),
        query in weights(),
        bump in 1u32..8,
    ) {
        let c = corpus(&bodies);
        let before: BTreeMap<DocId, f64> = c.search(&query).unwrap().iter().map(|h| (h.doc_id, h.score)).collect();
        let mut raised = query.clone();
        let first = raised.keys().next().unwrap().clone();
        *raised.get_mut(&first).unwrap() += f64::from(bump) / 8.0;
        let after: BTreeMap<DocId, f64> = c.search(&raised).unwrap().iter().map(|h| (h.doc_id, h.score)).collect();
        for (doc, score) in before {
            prop_assert!(after[&doc] >= score);
        }
    }

    #[test]
    fn rules_round_trip_through_text(
        specs in proptest::collection::vec(
            (proptest::collection::vec("[a-z]{1,6}( [a-z0-9]{1,4})?", 1..4), "[a-z]{1,8}", 1u32..=100),
            0..10,
        )
    ) {
        let rules: Vec<Rule> = specs
            .iter()
            .enumerate()
            .filter(|(_, (conds, concl, _))| !conds.contains(concl))
            .map(|(i, (conds, concl, conf))| Rule::new(format!("R{}", i + 1), conds, concl, f64::from(*conf) / 100.0, i + 1))
            .collect();
        let text = serialize_rules(&rules);
        let parsed = parse_rules(&text, "round-trip").unwrap();
        let canonical = |rs: &[Rule]| rs.iter().map(|r| r.to_string()).collect::<Vec<_>>();
        prop_assert_eq!(canonical(&parsed), canonical(&rules));
        prop_assert_eq!(serialize_rules(&parsed), text);
    }
}
