//! The search pipeline behind both the HTTP API and the CLI.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::{Duration, Instant};

use kwexpert_core::compose::{compose, extract_facts, FactExtractionSettings, FactRecord, SearchResult};
use kwexpert_core::compression::{
    compile_for_query, CacheError, CacheKey, CacheStamp, CacheStats, CompiledRuleSet, RuleCache,
};
use kwexpert_core::corpus::{Corpus, CorpusCooccurrence, CorpusError, DocId};
use kwexpert_core::inference::{forward_chain, Fact, SemanticArea, Trace};
use kwexpert_core::query::{
    effective_query, parse_request, Direction, EffectiveQuery, HistoryEntry, QueryError, Session,
};
use kwexpert_core::rules::{validate, RuleBase, RuleError, RuleId};
use kwexpert_core::ENGINE_VERSION;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;

const TRACE_STORE_LIMIT: usize = 100_000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("engine not ready: {0}")]
    Unavailable(&'static str),
    #[error("unknown trace `{0}`")]
    TraceNotFound(String),
    #[error("cache: {0}")]
    Cache(#[from] CacheError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRequest {
    #[serde(default)]
    pub session_id: Option<String>,
    pub query: String,
    #[serde(default)]
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Hit,
    Miss,
    Disabled,
    /// Cache storage failed; the rule set was compiled afresh.
    Degraded,
}

/// Diagnostics that may differ between otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchMetadata {
    pub cache: CacheStatus,
    pub enabled_rule_ids: Vec<RuleId>,
    pub compiled_rule_ids: Vec<RuleId>,
    pub fired_rule_ids: Vec<RuleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub engine_version: String,
    pub rulebase_version: String,
    pub corpus_version: String,
    pub session_id: Option<String>,
    pub result: SearchResult,
    pub metadata: SearchMetadata,
}

impl SearchResponse {
    /// Everything except the metadata, as compact JSON.
    pub fn canonical_json(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            engine_version: &'a str,
            rulebase_version: &'a str,
            corpus_version: &'a str,
            session_id: &'a Option<String>,
            result: &'a SearchResult,
        }
        serde_json::to_string(&Canonical {
            engine_version: &self.engine_version,
            rulebase_version: &self.rulebase_version,
            corpus_version: &self.corpus_version,
            session_id: &self.session_id,
            result: &self.result,
        })
        .expect("response serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentInput {
    pub uri: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulesLoaded {
    pub rule_count: usize,
    pub rulebase_version: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub ready: bool,
    pub documents: usize,
    pub rules_loaded: bool,
    pub engine_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub engine_version: String,
    pub rulebase_version: Option<String>,
    pub documents: usize,
    pub rules: usize,
    pub searches: u64,
    pub sessions: usize,
    pub traces: usize,
    pub cache_enabled: bool,
    pub cache_entries: usize,
    pub cache_hit_ratio: f64,
    pub cache: CacheStats,
    pub cache_degraded: u64,
}

#[derive(Clone, Default)]
struct Snapshot {
    corpus: Arc<Corpus>,
    rules: Option<Arc<RuleBase>>,
}

struct SessionSlot {
    session: Session,
    last_used: Instant,
}

#[derive(Default)]
struct TraceStore {
    traces: HashMap<String, Trace>,
    order: VecDeque<String>,
}

impl TraceStore {
    fn insert(&mut self, trace: Trace) {
        if self.traces.contains_key(&trace.trace_id) {
            return;
        }
        self.order.push_back(trace.trace_id.clone());
        self.traces.insert(trace.trace_id.clone(), trace);
        while self.order.len() > TRACE_STORE_LIMIT {
            if let Some(old) = self.order.pop_front() {
                self.traces.remove(&old);
            }
        }
    }
}

#[derive(Default)]
struct Counters {
    searches: u64,
    cache_degraded: u64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

/// Shared engine state. Corpus and rule reloads swap an immutable snapshot,
/// so searches in flight keep the snapshot they started with.
pub struct Engine {
    config: Config,
    snapshot: RwLock<Snapshot>,
    sessions: Mutex<HashMap<String, Arc<Mutex<SessionSlot>>>>,
    traces: Mutex<TraceStore>,
    cache: Option<Mutex<RuleCache>>,
    counters: Mutex<Counters>,
}

impl Engine {
    /// An empty engine. A cache log that cannot be opened falls back to an
    /// in-memory cache.
    pub fn new(config: Config) -> Self {
        let mut degraded = 0;
        let cache = config.cache_enabled.then(|| {
            let cache = match &config.cache_path {
                Some(path) => RuleCache::open(path, config.cache_capacity).unwrap_or_else(|_| {
                    degraded += 1;
                    RuleCache::in_memory(config.cache_capacity)
                }),
                None => RuleCache::in_memory(config.cache_capacity),
            };
            Mutex::new(cache)
        });
        Engine {
            config,
            snapshot: RwLock::new(Snapshot::default()),
            sessions: Mutex::new(HashMap::new()),
            traces: Mutex::new(TraceStore::default()),
            cache,
            counters: Mutex::new(Counters {
                searches: 0,
                cache_degraded: degraded,
            }),
        }
    }

    /// An engine loaded from the configured index or corpus and rules.
    pub fn from_config(config: Config) -> Result<Self, EngineError> {
        let engine = Engine::new(config.clone());
        if let Some(index) = config.index_path.as_deref().filter(|p| p.exists()) {
            engine.set_corpus(Corpus::load(index)?);
        } else if let Some(dir) = &config.corpus_dir {
            let mut corpus = Corpus::new();
            corpus.ingest_dir(dir)?;
            engine.set_corpus(corpus);
        }
        if let Some(path) = &config.rules_file {
            let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
                path: path.clone(),
                source,
            })?;
            engine.load_rules(&text, &path.display().to_string())?;
        }
        Ok(engine)
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    fn snapshot(&self) -> Snapshot {
        self.snapshot.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn swap(&self, update: impl FnOnce(&mut Snapshot)) {
        let mut guard = self.snapshot.write().unwrap_or_else(|p| p.into_inner());
        update(&mut guard);
    }

    pub fn set_corpus(&self, corpus: Corpus) {
        self.swap(|s| s.corpus = Arc::new(corpus));
    }

    pub fn corpus(&self) -> Arc<Corpus> {
        self.snapshot().corpus
    }

    pub fn rules(&self) -> Option<Arc<RuleBase>> {
        self.snapshot().rules
    }

    pub fn ingest(&self, doc: &DocumentInput) -> Result<DocId, EngineError> {
        let mut guard = self.snapshot.write().unwrap_or_else(|p| p.into_inner());
        let mut corpus = (*guard.corpus).clone();
        let id = corpus.ingest_document(&doc.uri, &doc.title, &doc.body)?;
        guard.corpus = Arc::new(corpus);
        Ok(id)
    }

    /// Parses and validates `text`, then replaces the rule base.
    pub fn load_rules(&self, text: &str, source: &str) -> Result<RulesLoaded, EngineError> {
        let base = RuleBase::parse(text, source)?;
        let report = validate(&base)?;
        let loaded = RulesLoaded {
            rule_count: base.len(),
            rulebase_version: base.version_hash().to_string(),
            warnings: report.warnings(),
        };
        self.swap(|s| s.rules = Some(Arc::new(base)));
        Ok(loaded)
    }

    pub fn health(&self) -> Health {
        let snap = self.snapshot();
        Health {
            ready: !snap.corpus.is_empty() && snap.rules.is_some(),
            documents: snap.corpus.len(),
            rules_loaded: snap.rules.is_some(),
            engine_version: ENGINE_VERSION.to_string(),
        }
    }

    pub fn stats(&self) -> Stats {
        let snap = self.snapshot();
        let (cache, cache_entries) = match &self.cache {
            Some(c) => {
                let c = lock(c);
                (c.stats(), c.len())
            }
            None => (CacheStats::default(), 0),
        };
        let counters = lock(&self.counters);
        Stats {
            engine_version: ENGINE_VERSION.to_string(),
            rulebase_version: snap.rules.as_ref().map(|r| r.version_hash().to_string()),
            documents: snap.corpus.len(),
            rules: snap.rules.as_ref().map_or(0, |r| r.len()),
            searches: counters.searches,
            sessions: lock(&self.sessions).len(),
            traces: lock(&self.traces).traces.len(),
            cache_enabled: self.cache.is_some(),
            cache_entries,
            cache_hit_ratio: cache.hit_ratio(),
            cache,
            cache_degraded: counters.cache_degraded,
        }
    }

    pub fn explain(&self, trace_id: &str) -> Result<Trace, EngineError> {
        lock(&self.traces)
            .traces
            .get(trace_id)
            .cloned()
            .ok_or_else(|| EngineError::TraceNotFound(trace_id.to_string()))
    }

    fn ready_snapshot(&self) -> Result<(Arc<Corpus>, Arc<RuleBase>), EngineError> {
        let snap = self.snapshot();
        if snap.corpus.is_empty() {
            return Err(EngineError::Unavailable("no documents indexed"));
        }
        let rules = snap.rules.ok_or(EngineError::Unavailable("no rule base loaded"))?;
        Ok((snap.corpus, rules))
    }

    fn session_slot(&self, id: &str) -> Arc<Mutex<SessionSlot>> {
        let idle = Duration::from_secs(self.config.session_idle_secs);
        let now = Instant::now();
        let mut sessions = lock(&self.sessions);
        sessions.retain(|_, slot| match slot.try_lock() {
            Ok(s) => now.duration_since(s.last_used) <= idle,
            Err(_) => true,
        });
        sessions
            .entry(id.to_string())
            .or_insert_with(|| {
                Arc::new(Mutex::new(SessionSlot {
                    session: Session::with_capacity(id, 0, self.config.history_len),
                    last_used: now,
                }))
            })
            .clone()
    }

    /// History of a live session, oldest first.
    pub fn session_history(&self, id: &str) -> Option<Vec<HistoryEntry>> {
        let slot = lock(&self.sessions).get(id).cloned()?;
        let slot = lock(&slot);
        Some(slot.session.history().cloned().collect())
    }

    fn stamp(&self, corpus: &Corpus, rules: &RuleBase) -> CacheStamp {
        CacheStamp::new(
            rules.version_hash(),
            corpus.version(),
            self.config.window,
            self.config.min_count,
            self.config.tau,
        )
    }

    fn compile(
        &self,
        corpus: &Corpus,
        rules: &RuleBase,
        query: &EffectiveQuery,
        direction: Direction,
    ) -> CompiledRuleSet {
        let oracle = self.oracle(corpus);
        let area = SemanticArea::new(query.terms(), &oracle);
        let key = CacheKey::new(query.terms(), direction);
        compile_for_query(key, rules, &area, self.config.tau, self.stamp(corpus, rules))
    }

    fn oracle<'a>(&self, corpus: &'a Corpus) -> CorpusCooccurrence<'a> {
        CorpusCooccurrence {
            corpus,
            window: self.config.window,
            min_count: self.config.min_count,
        }
    }

    fn compiled_for(
        &self,
        corpus: &Corpus,
        rules: &RuleBase,
        query: &EffectiveQuery,
        direction: Direction,
    ) -> (CompiledRuleSet, CacheStatus) {
        let Some(cache) = &self.cache else {
            return (self.compile(corpus, rules, query, direction), CacheStatus::Disabled);
        };
        let key = CacheKey::new(query.terms(), direction);
        let stamp = self.stamp(corpus, rules);
        let looked_up = lock(cache).get(&key, &stamp);
        match looked_up {
            Ok(Some(set)) => (set, CacheStatus::Hit),
            Ok(None) => {
                let set = self.compile(corpus, rules, query, direction);
                let stored = lock(cache).put(set.clone(), &stamp);
                match stored {
                    Ok(()) => (set, CacheStatus::Miss),
                    Err(_) => {
                        lock(&self.counters).cache_degraded += 1;
                        (set, CacheStatus::Degraded)
                    }
                }
            }
            Err(_) => {
                lock(&self.counters).cache_degraded += 1;
                (self.compile(corpus, rules, query, direction), CacheStatus::Degraded)
            }
        }
    }

    /// Compiled rule set for a standalone query, bypassing cache and
    /// sessions.
    pub fn compile_query(&self, query: &str, direction: Direction) -> Result<CompiledRuleSet, EngineError> {
        let (corpus, rules) = self.ready_snapshot()?;
        let request = parse_request(query, direction)?;
        Ok(self.compile(&corpus, &rules, &EffectiveQuery::standalone(&request), direction))
    }

    /// Runs parse, session linkage, rule compilation, retrieval, fact
    /// extraction, forward chaining and composition.
    pub fn search(&self, req: &SearchRequest) -> Result<SearchResponse, EngineError> {
        let direction = req.direction.unwrap_or_default();
        let request = parse_request(&req.query, direction)?;
        let (corpus, rules) = self.ready_snapshot()?;
        let oracle = self.oracle(&corpus);

        let slot = req.session_id.as_deref().map(|id| self.session_slot(id));
        let mut guard = slot.as_ref().map(|s| lock(s));
        let query = match guard.as_deref() {
            Some(s) => effective_query(&s.session, &request, self.config.theta, self.config.decay, &oracle),
            None => EffectiveQuery::standalone(&request),
        };

        let (compiled, cache) = self.compiled_for(&corpus, &rules, &query, direction);
        let compiled_rules = compiled.inference_rules();
        let hits = corpus.search(&query.weighted_terms)?;
        let settings = FactExtractionSettings {
            top_k: self.config.top_k,
            ..FactExtractionSettings::default()
        };
        let facts = extract_facts(&query, &corpus, &hits, &compiled_rules, &settings);
        let initial: Vec<Fact> = facts.iter().map(FactRecord::to_fact).collect();
        let outcome = forward_chain(&initial, &compiled_rules, self.config.strategy, self.config.max_depth);
        let fired_rule_ids = outcome.fired_rules().cloned().collect();
        let (result, traces) = compose(query, facts, &outcome, hits);

        {
            let mut store = lock(&self.traces);
            for trace in traces {
                store.insert(trace);
            }
        }
        if let Some(slot) = guard.as_mut() {
            slot.session.push(HistoryEntry {
                request,
                result_terms: result.result_terms(),
            });
            slot.last_used = Instant::now();
        }
        drop(guard);
        lock(&self.counters).searches += 1;

        Ok(SearchResponse {
            engine_version: ENGINE_VERSION.to_string(),
            rulebase_version: rules.version_hash().to_string(),
            corpus_version: corpus.version().to_string(),
            session_id: req.session_id.clone(),
            result,
            metadata: SearchMetadata {
                cache,
                enabled_rule_ids: compiled.enabled_rule_ids.clone(),
                compiled_rule_ids: compiled.rules.iter().map(|r| r.id().clone()).collect(),
                fired_rule_ids,
            },
        })
    }

    /// Loads corpus documents from a directory, replacing the corpus.
    pub fn load_corpus_dir(&self, dir: &Path) -> Result<usize, EngineError> {
        let mut corpus = Corpus::new();
        let ids = corpus.ingest_dir(dir)?;
        self.set_corpus(corpus);
        Ok(ids.len())
    }

    /// Session ids currently held, with their history lengths.
    pub fn sessions(&self) -> BTreeMap<String, usize> {
        let sessions = lock(&self.sessions);
        sessions
            .iter()
            .map(|(id, slot)| (id.clone(), lock(slot).session.len()))
            .collect()
    }
}
