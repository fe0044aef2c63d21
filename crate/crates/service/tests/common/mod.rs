#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use kwexpert::engine::{DocumentInput, SearchRequest, SearchResponse};
use kwexpert::{Config, Engine};

pub fn fixture(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(path)
}

/// Engine over one fixture directory with its rule file.
pub fn fixture_engine(name: &str, config: Config) -> Engine {
    let config = Config {
        corpus_dir: Some(fixture(&format!("{name}/docs"))),
        rules_file: Some(fixture(&format!("{name}/rules.txt"))),
        ..config
    };
    Engine::from_config(config).expect("fixture loads")
}

/// Engine over several fixtures: all documents, all rules concatenated.
pub fn combined_engine(names: &[&str], config: Config) -> Engine {
    let engine = Engine::new(config);
    let mut rules = String::new();
    for name in names {
        let dir = fixture(&format!("{name}/docs"));
        let mut paths: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path).unwrap();
            let (title, body) = text.split_once('\n').unwrap();
            engine
                .ingest(&DocumentInput {
                    uri: format!("{name}/{}", path.file_name().unwrap().to_string_lossy()),
                    title: title.to_string(),
                    body: body.to_string(),
                })
                .unwrap();
        }
        rules.push_str(&std::fs::read_to_string(fixture(&format!("{name}/rules.txt"))).unwrap());
    }
    engine.load_rules(&rules, "combined").unwrap();
    engine
}

pub fn ask(engine: &Engine, session: Option<&str>, query: &str) -> SearchResponse {
    engine
        .search(&SearchRequest {
            session_id: session.map(str::to_string),
            query: query.to_string(),
            direction: None,
        })
        .expect("search succeeds")
}

pub fn fact_set(r: &SearchResponse) -> BTreeSet<String> {
    r.result.facts.iter().map(|f| f.statement.clone()).collect()
}

pub fn conclusion_set(r: &SearchResponse) -> BTreeSet<String> {
    r.result.conclusions.iter().map(|c| c.statement.clone()).collect()
}

pub fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}
