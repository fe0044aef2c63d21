use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CacheKey, CacheStamp, CompiledRuleSet, COMPILED_FORMAT_VERSION};

pub const DEFAULT_CAPACITY: usize = 10_000;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("compiled set was built against {found:?}, current is {current:?}")]
    StaleVersion { found: CacheStamp, current: CacheStamp },
    #[error("cache storage: {0}")]
    Storage(#[from] io::Error),
    #[error("corrupt cache record: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub stale: u64,
    pub evictions: u64,
    /// Log lines skipped on open.
    pub corrupt_records: u64,
}

impl CacheStats {
    pub fn hit_ratio(&self) -> f64 {
        let lookups = self.hits + self.misses;
        if lookups == 0 {
            0.0
        } else {
            self.hits as f64 / lookups as f64
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum LogRecord {
    Put { set: CompiledRuleSet },
    Evict { key: CacheKey },
}

struct Log {
    path: PathBuf,
    file: File,
    lines: usize,
}

impl Log {
    fn append(&mut self, record: &LogRecord) -> io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.lines += 1;
        Ok(())
    }
}

/// Bounded LRU of compiled rule sets, optionally backed by an append-only
/// JSON-lines log.
pub struct RuleCache {
    capacity: usize,
    entries: IndexMap<CacheKey, CompiledRuleSet>,
    log: Option<Log>,
    stats: CacheStats,
}

impl RuleCache {
    pub fn in_memory(capacity: usize) -> Self {
        RuleCache {
            capacity: capacity.max(1),
            entries: IndexMap::new(),
            log: None,
            stats: CacheStats::default(),
        }
    }

    /// Replays the log at `path`, skipping unreadable lines.
    pub fn open(path: &Path, capacity: usize) -> Result<Self, CacheError> {
        let mut cache = RuleCache::in_memory(capacity);
        let mut lines = 0;
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                lines += 1;
                match serde_json::from_str::<LogRecord>(&line) {
                    Ok(LogRecord::Put { set }) if set.format_version == COMPILED_FORMAT_VERSION => {
                        cache.insert(set);
                    }
                    Ok(LogRecord::Evict { key }) => {
                        cache.entries.shift_remove(&key);
                    }
                    Ok(LogRecord::Put { .. }) | Err(_) => cache.stats.corrupt_records += 1,
                }
            }
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        cache.log = Some(Log {
            path: path.to_path_buf(),
            file,
            lines,
        });
        if cache.stats.corrupt_records > 0 || lines > cache.compaction_threshold() {
            cache.compact()?;
        }
        Ok(cache)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn keys(&self) -> impl Iterator<Item = &CacheKey> {
        self.entries.keys()
    }

    /// Looks up `key`, dropping the entry if its stamp no longer matches.
    ///
    /// An `Err` means the storage could not record the eviction; the returned
    /// lookup is then a miss and the caller should recompile.
    pub fn get(&mut self, key: &CacheKey, current: &CacheStamp) -> Result<Option<CompiledRuleSet>, CacheError> {
        let Some(index) = self.entries.get_index_of(key) else {
            self.stats.misses += 1;
            return Ok(None);
        };
        if &self.entries[index].stamp != current {
            self.entries.shift_remove_index(index);
            self.stats.stale += 1;
            self.stats.misses += 1;
            self.append(&LogRecord::Evict { key: key.clone() })?;
            return Ok(None);
        }
        let last = self.entries.len() - 1;
        self.entries.move_index(index, last);
        self.stats.hits += 1;
        Ok(Some(self.entries[last].clone()))
    }

    /// Stores a compiled set built against `current`.
    pub fn put(&mut self, set: CompiledRuleSet, current: &CacheStamp) -> Result<(), CacheError> {
        if &set.stamp != current {
            return Err(CacheError::StaleVersion {
                found: set.stamp,
                current: current.clone(),
            });
        }
        let evicted = self.insert(set.clone());
        self.append(&LogRecord::Put { set })?;
        for key in evicted {
            self.append(&LogRecord::Evict { key })?;
        }
        if self.log.as_ref().is_some_and(|l| l.lines > self.compaction_threshold()) {
            self.compact()?;
        }
        Ok(())
    }

    pub fn clear(&mut self) -> Result<(), CacheError> {
        self.entries.clear();
        if self.log.is_some() {
            self.compact()?;
        }
        Ok(())
    }

    fn insert(&mut self, set: CompiledRuleSet) -> Vec<CacheKey> {
        self.entries.shift_remove(&set.key);
        self.entries.insert(set.key.clone(), set);
        let mut evicted = Vec::new();
        while self.entries.len() > self.capacity {
            if let Some((key, _)) = self.entries.shift_remove_index(0) {
                self.stats.evictions += 1;
                evicted.push(key);
            }
        }
        evicted
    }

    fn append(&mut self, record: &LogRecord) -> Result<(), CacheError> {
        if let Some(log) = self.log.as_mut() {
            log.append(record)?;
        }
        Ok(())
    }

    fn compaction_threshold(&self) -> usize {
        2 * self.capacity + 16
    }

    /// Rewrites the log with one record per live entry, oldest first.
    fn compact(&mut self) -> Result<(), CacheError> {
        let Some(log) = self.log.as_mut() else {
            return Ok(());
        };
        let tmp = log.path.with_extension("compact");
        {
            let mut out = io::BufWriter::new(File::create(&tmp)?);
            for set in self.entries.values() {
                let record = serde_json::to_string(&LogRecord::Put { set: set.clone() }).map_err(io::Error::other)?;
                writeln!(out, "{record}")?;
            }
            out.flush()?;
        }
        fs::rename(&tmp, &log.path)?;
        log.file = OpenOptions::new().append(true).open(&log.path)?;
        log.lines = self.entries.len();
        Ok(())
    }
}
