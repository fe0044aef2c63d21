//! Document store and inverted index.
//!
//! A [`Corpus`] is an immutable-once-shared snapshot: ingestion mutates a
//! private copy which callers then publish (the service keeps it behind an
//! `Arc` and swaps the whole snapshot).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const SNAPSHOT_FORMAT: &str = "kwexpert-index";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("document `{uri}` has an empty body")]
    EmptyBody { uri: String },
    #[error("document `{uri}` is already in the corpus")]
    DuplicateUri { uri: String },
    #[error("query has no term with a positive weight")]
    NoPositiveWeight,
    #[error("unsupported index snapshot: {0}")]
    Snapshot(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(pub u32);

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "doc{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: DocId,
    pub uri: String,
    pub title: String,
    pub body: String,
}

impl Document {
    /// The indexed text: title, then body.
    pub fn text(&self) -> String {
        format!("{}\n{}", self.title, self.body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub term: String,
    pub doc_id: DocId,
    pub frequency: u32,
    pub positions: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedHit {
    pub doc_id: DocId,
    pub score: f64,
    pub per_term_counts: BTreeMap<String, u32>,
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text).into_iter().map(|(token, _)| token).collect()
}

/// Tokens together with the byte range of the source segment they came from.
pub fn token_spans(text: &str) -> Vec<(String, Range<usize>)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
        match (ch.is_alphanumeric() && i < text.len(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let lowered = text[s..i].to_lowercase();
                // Lowercasing can introduce non-alphanumeric code points
                // (combining marks), so split again.
                for piece in lowered.split(|c: char| !c.is_alphanumeric()) {
                    if !piece.is_empty() {
                        out.push((piece.to_string(), s..i));
                    }
                }
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Normalizes a phrase into its canonical single-space form.
pub fn normalize_phrase(text: &str) -> String {
    tokenize(text).join(" ")
}

/// Source of corpus co-occurrence neighbours for a term.
pub trait CooccurrenceSource {
    fn cooccurring(&self, term: &str) -> BTreeSet<String>;
}

impl CooccurrenceSource for BTreeMap<String, BTreeSet<String>> {
    fn cooccurring(&self, term: &str) -> BTreeSet<String> {
        self.get(term).cloned().unwrap_or_default()
    }
}

/// Binds a corpus to the window and count used for expansion.
#[derive(Debug, Clone, Copy)]
pub struct CorpusCooccurrence<'a> {
    pub corpus: &'a Corpus,
    pub window: usize,
    pub min_count: u32,
}

impl CooccurrenceSource for CorpusCooccurrence<'_> {
    fn cooccurring(&self, term: &str) -> BTreeSet<String> {
        self.corpus.cooccurring_terms(term, self.window, self.min_count)
    }
}

#[derive(Debug, Clone)]
struct IndexedDoc {
    doc: Document,
    tokens: Vec<String>,
    spans: Vec<Range<usize>>,
    text: String,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<IndexedDoc>,
    by_uri: HashMap<String, DocId>,
    postings: BTreeMap<String, Vec<Posting>>,
    version: String,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    documents: Vec<SnapshotDoc>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotDoc {
    uri: String,
    title: String,
    body: String,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Digest over every ingested document, in ingestion order.
    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn document(&self, id: DocId) -> Option<&Document> {
        self.docs.get(id.0 as usize).map(|d| &d.doc)
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter().map(|d| &d.doc)
    }

    pub fn tokens(&self, id: DocId) -> Option<&[String]> {
        self.docs.get(id.0 as usize).map(|d| d.tokens.as_slice())
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn posting(&self, term: &str, doc: DocId) -> Option<&Posting> {
        let list = self.postings(term);
        list.binary_search_by_key(&doc, |p| p.doc_id).ok().map(|i| &list[i])
    }

    pub fn ingest_document(&mut self, uri: &str, title: &str, body: &str) -> Result<DocId, CorpusError> {
        if body.trim().is_empty() {
            return Err(CorpusError::EmptyBody { uri: uri.to_string() });
        }
        if self.by_uri.contains_key(uri) {
            return Err(CorpusError::DuplicateUri { uri: uri.to_string() });
        }
        let doc_id = DocId(self.docs.len() as u32);
        let doc = Document {
            doc_id,
            uri: uri.to_string(),
            title: title.to_string(),
            body: body.to_string(),
        };
        let text = doc.text();
        let (tokens, spans): (Vec<_>, Vec<_>) = token_spans(&text).into_iter().unzip();

        let mut positions: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
        for (i, token) in tokens.iter().enumerate() {
            positions.entry(token.as_str()).or_default().push(i as u32);
        }
        for (term, positions) in positions {
            // Doc ids only grow, so every postings list stays sorted.
            self.postings.entry(term.to_string()).or_default().push(Posting {
                term: term.to_string(),
                doc_id,
                frequency: positions.len() as u32,
                positions,
            });
        }

        let mut hasher = Sha256::new();
        hasher.update(self.version.as_bytes());
        for part in [uri, title, body] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
        self.version = hex::encode(hasher.finalize());

        self.by_uri.insert(doc.uri.clone(), doc_id);
        self.docs.push(IndexedDoc {
            doc,
            tokens,
            spans,
            text,
        });
        Ok(doc_id)
    }

    /// Ranks documents by priority-weighted raw term frequency.
    pub fn search(&self, weighted_terms: &BTreeMap<String, f64>) -> Result<Vec<RankedHit>, CorpusError> {
        let active: Vec<(&String, f64)> = weighted_terms
            .iter()
            .filter(|(_, &w)| w > 0.0)
            .map(|(t, &w)| (t, w))
            .collect();
        if active.is_empty() {
            return Err(CorpusError::NoPositiveWeight);
        }

        let mut hits: BTreeMap<DocId, RankedHit> = BTreeMap::new();
        for (term, weight) in active {
            for posting in self.postings(term) {
                let hit = hits.entry(posting.doc_id).or_insert_with(|| RankedHit {
                    doc_id: posting.doc_id,
                    score: 0.0,
                    per_term_counts: BTreeMap::new(),
                });
                hit.score += weight * f64::from(posting.frequency);
                hit.per_term_counts.insert(term.clone(), posting.frequency);
            }
        }

        let mut ranked: Vec<RankedHit> = hits.into_values().collect();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.doc_id.cmp(&b.doc_id)));
        Ok(ranked)
    }

    /// Terms found within `window` tokens of `term` at least `min_count`
    /// times across the corpus. Each (occurrence, neighbour) pair counts once.
    pub fn cooccurring_terms(&self, term: &str, window: usize, min_count: u32) -> BTreeSet<String> {
        let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
        for posting in self.postings(term) {
            let tokens = &self.docs[posting.doc_id.0 as usize].tokens;
            for &p in &posting.positions {
                let p = p as usize;
                let lo = p.saturating_sub(window);
                let hi = (p + window + 1).min(tokens.len());
                for (q, neighbour) in tokens.iter().enumerate().take(hi).skip(lo) {
                    if q != p && neighbour != term {
                        *counts.entry(neighbour.as_str()).or_default() += 1;
                    }
                }
            }
        }
        counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .map(|(t, _)| t.to_string())
            .collect()
    }

    /// Earliest token span in which every token of `phrase` occurs inside a
    /// window of `window` consecutive tokens.
    pub fn phrase_match(&self, doc: DocId, phrase: &[String], window: usize) -> Option<Range<usize>> {
        if phrase.is_empty() || window == 0 {
            return None;
        }
        let mut lists = Vec::with_capacity(phrase.len());
        for token in phrase {
            lists.push(self.posting(token, doc)?.positions.as_slice());
        }
        let mut starts: Vec<u32> = lists.iter().flat_map(|l| l.iter().copied()).collect();
        starts.sort_unstable();
        starts.dedup();
        for start in starts {
            let mut end = start;
            let mut ok = true;
            for list in &lists {
                let i = list.partition_point(|&p| p < start);
                match list.get(i) {
                    Some(&p) if ((p - start) as usize) < window => end = end.max(p),
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                return Some(start as usize..end as usize + 1);
            }
        }
        None
    }

    /// Original text covering `width` tokens centred on `span`.
    pub fn snippet(&self, doc: DocId, span: Range<usize>, width: usize) -> String {
        let Some(d) = self.docs.get(doc.0 as usize) else {
            return String::new();
        };
        let n = d.tokens.len();
        if n == 0 || span.start >= n {
            return String::new();
        }
        let span_len = span.end.min(n) - span.start;
        let width = width.max(span_len);
        let lead = (width - span_len) / 2;
        let mut start = span.start.saturating_sub(lead);
        let end = (start + width).min(n);
        start = end.saturating_sub(width);
        let bytes = d.spans[start].start..d.spans[end - 1].end;
        d.text[bytes].split_whitespace().collect::<Vec<_>>().join(" ")
    }

    /// Ingests every regular file of `dir` in path order: first line is the
    /// title, the remainder the body.
    pub fn ingest_dir(&mut self, dir: &Path) -> Result<Vec<DocId>, CorpusError> {
        let io = |source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .filter(|p| !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')))
            .collect();
        paths.sort();
        let mut ids = Vec::with_capacity(paths.len());
        for path in paths {
            let content = fs::read_to_string(&path).map_err(|source| CorpusError::Io {
                path: path.clone(),
                source,
            })?;
            let (title, body) = content.split_once('\n').unwrap_or((content.as_str(), ""));
            ids.push(self.ingest_document(&path.to_string_lossy(), title.trim(), body)?);
        }
        Ok(ids)
    }

    pub fn to_snapshot_json(&self) -> String {
        let snapshot = Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            documents: self
                .documents()
                .map(|d| SnapshotDoc {
                    uri: d.uri.clone(),
                    title: d.title.clone(),
                    body: d.body.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&snapshot).expect("snapshot serializes")
    }

    pub fn from_snapshot_json(json: &str) -> Result<Self, CorpusError> {
        let snapshot: Snapshot = serde_json::from_str(json).map_err(|e| CorpusError::Snapshot(e.to_string()))?;
        if snapshot.format != SNAPSHOT_FORMAT || snapshot.version != SNAPSHOT_VERSION {
            return Err(CorpusError::Snapshot(format!(
                "expected {SNAPSHOT_FORMAT} v{SNAPSHOT_VERSION}, found {} v{}",
                snapshot.format, snapshot.version
            )));
        }
        let mut corpus = Corpus::new();
        for d in snapshot.documents {
            corpus.ingest_document(&d.uri, &d.title, &d.body)?;
        }
        Ok(corpus)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_snapshot_json()).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let json = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_snapshot_json(&json)
    }
}
