//! Miniature tablet-server model.
//!
//! Tables are split on row boundaries into tablets. Each tablet has a sorted
//! in-memory buffer that spills into immutable sorted runs, and a combiner
//! stack that runs during flush, compaction and scan. Tablets are independent:
//! bulk operations fan out over them on the current rayon pool.

mod combiner;
mod dump;
mod key;
mod run;
mod splits;
mod tablet;

use std::collections::HashMap;
use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use rayon::prelude::*;
use thiserror::Error;

pub use combiner::{
    Combiner, CombinerStack, EntryStream, KeyCombiner, KeyFold, StreamIterator, SumCombiner,
};
pub use dump::dump_tsv;
pub use key::{decode_u64, encode_u64, Bytes, Entry, Key};
pub use run::{RunIter, RunStore, SortedRun};
pub use splits::{compute_equal_splits, RowRange, SplitPoints};

use tablet::Tablet;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("table `{0}` already exists")]
    TableExists(String),
    #[error("no such table `{0}`")]
    NoSuchTable(String),
    #[error("split points must be strictly increasing")]
    InvalidSplits,
    #[error("tablet count must be at least 1, got {0}")]
    InvalidTabletCount(usize),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    /// Buffered bytes per tablet before an automatic flush.
    pub buffer_limit_bytes: usize,
    /// Runs per tablet before an automatic compaction.
    pub max_runs_per_tablet: usize,
    /// Directory for spilled runs; `None` keeps runs in memory.
    pub spill_dir: Option<PathBuf>,
    /// Worker threads; 0 lets rayon pick.
    pub workers: usize,
    /// Rows cached per worker by inner-product lookups.
    pub row_cache_capacity: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            buffer_limit_bytes: 1 << 20,
            max_runs_per_tablet: 8,
            spill_dir: None,
            workers: 0,
            row_cache_capacity: 4096,
        }
    }
}

/// Registry of named tables plus the worker pool that drives them.
pub struct Engine {
    config: EngineConfig,
    store: RunStore,
    tables: Mutex<HashMap<String, Arc<Table>>>,
    pool: rayon::ThreadPool,
    next_id: AtomicU64,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self, EngineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| EngineError::ThreadPool(e.to_string()))?;
        let store = match &config.spill_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                RunStore::spill_to(dir)
            }
            None => RunStore::memory(),
        };
        Ok(Engine {
            config,
            store,
            tables: Mutex::new(HashMap::new()),
            pool,
            next_id: AtomicU64::new(0),
        })
    }

    pub fn in_memory() -> Self {
        Engine::new(EngineConfig::default()).expect("default engine")
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Runs `f` on this engine's worker pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    /// A table name not used before on this engine.
    pub fn fresh_name(&self, prefix: &str) -> String {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        format!("{prefix}~{id}")
    }

    pub fn create_table(
        &self,
        name: &str,
        splits: SplitPoints,
        stack: CombinerStack,
    ) -> Result<Arc<Table>, EngineError> {
        let mut tables = self.tables.lock();
        if tables.contains_key(name) {
            return Err(EngineError::TableExists(name.to_string()));
        }
        let tablets = (0..splits.n_tablets()).map(|_| Tablet::default()).collect();
        let table = Arc::new(Table::assemble(name, splits, stack, tablets, self));
        tables.insert(name.to_string(), table.clone());
        Ok(table)
    }

    pub fn table(&self, name: &str) -> Result<Arc<Table>, EngineError> {
        self.tables
            .lock()
            .get(name)
            .cloned()
            .ok_or_else(|| EngineError::NoSuchTable(name.to_string()))
    }

    pub fn table_names(&self) -> Vec<String> {
        let mut names: Vec<_> = self.tables.lock().keys().cloned().collect();
        names.sort();
        names
    }

    /// Copy-on-write clone: the new table shares the source's runs and has
    /// the same splits and combiner stack. The source buffer is flushed first
    /// so no entry data is copied.
    pub fn clone_table(&self, source: &str, new_name: &str) -> Result<Arc<Table>, EngineError> {
        let src = self.table(source)?;
        if self.tables.lock().contains_key(new_name) {
            return Err(EngineError::TableExists(new_name.to_string()));
        }
        self.install(|| src.flush())?;
        let tablets = src
            .tablets
            .iter()
            .map(|t| Tablet::with_runs(t.lock().runs.clone()))
            .collect();
        let table = Arc::new(Table::assemble(
            new_name,
            src.splits.clone(),
            src.stack.clone(),
            tablets,
            self,
        ));
        let mut tables = self.tables.lock();
        if tables.contains_key(new_name) {
            return Err(EngineError::TableExists(new_name.to_string()));
        }
        tables.insert(new_name.to_string(), table.clone());
        Ok(table)
    }

    /// Removes a table from the registry. Its runs are freed once the last
    /// handle (including clones sharing them) goes away.
    pub fn drop_table(&self, name: &str) -> bool {
        self.tables.lock().remove(name).is_some()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TabletStats {
    pub stored_entries: usize,
    pub buffered_entries: usize,
    pub runs: usize,
    pub writes: u64,
    pub scans: u64,
}

pub struct Table {
    name: String,
    splits: SplitPoints,
    stack: CombinerStack,
    tablets: Vec<Mutex<Tablet>>,
    scans: Vec<AtomicU64>,
    store: RunStore,
    buffer_limit: usize,
    max_runs: usize,
}

impl Table {
    fn assemble(
        name: &str,
        splits: SplitPoints,
        stack: CombinerStack,
        tablets: Vec<Tablet>,
        engine: &Engine,
    ) -> Table {
        let scans = (0..tablets.len()).map(|_| AtomicU64::new(0)).collect();
        Table {
            name: name.to_string(),
            splits,
            stack,
            tablets: tablets.into_iter().map(Mutex::new).collect(),
            scans,
            store: engine.store.clone(),
            buffer_limit: engine.config.buffer_limit_bytes,
            max_runs: engine.config.max_runs_per_tablet.max(1),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn splits(&self) -> &SplitPoints {
        &self.splits
    }

    pub fn stack(&self) -> &CombinerStack {
        &self.stack
    }

    pub fn n_tablets(&self) -> usize {
        self.tablets.len()
    }

    pub fn put(&self, entry: Entry) -> Result<(), EngineError> {
        let i = self.splits.tablet_for(entry.row());
        let mut t = self.tablets[i].lock();
        t.insert(entry, &self.stack);
        self.maybe_spill(&mut t)
    }

    /// Routes a batch of entries, taking each tablet lock once. Each
    /// tablet's share is key-sorted (stably) before it enters the buffer.
    pub fn put_batch(&self, entries: Vec<Entry>) -> Result<(), EngineError> {
        let mut per_tablet: Vec<Vec<Entry>> = if self.tablets.len() == 1 {
            vec![entries]
        } else {
            let mut split = vec![Vec::new(); self.tablets.len()];
            for e in entries {
                split[self.splits.tablet_for(e.row())].push(e);
            }
            split
        };
        for (i, batch) in per_tablet.iter_mut().enumerate() {
            if batch.is_empty() {
                continue;
            }
            batch.sort_by(Entry::cmp_key);
            let mut t = self.tablets[i].lock();
            for e in batch.drain(..) {
                t.insert(e, &self.stack);
                self.maybe_spill(&mut t)?;
            }
        }
        Ok(())
    }

    fn maybe_spill(&self, t: &mut Tablet) -> Result<(), EngineError> {
        if t.buffer_bytes() >= self.buffer_limit {
            t.flush(&self.stack, &self.store)?;
            if t.runs.len() > self.max_runs {
                t.compact(&self.stack, &self.store)?;
            }
        }
        Ok(())
    }

    pub fn flush(&self) -> Result<(), EngineError> {
        self.tablets
            .par_iter()
            .try_for_each(|t| t.lock().flush(&self.stack, &self.store))?;
        Ok(())
    }

    pub fn compact(&self) -> Result<(), EngineError> {
        self.tablets
            .par_iter()
            .try_for_each(|t| t.lock().compact(&self.stack, &self.store))?;
        Ok(())
    }

    /// Combined entries of tablet `i` within `range`.
    pub fn scan_tablet(&self, i: usize, range: &RowRange) -> EntryStream<'static> {
        let Some(range) = self.splits.tablet_range(i).intersect(range) else {
            return Box::new(std::iter::empty());
        };
        self.scans[i].fetch_add(1, Ordering::Relaxed);
        let snapshot = self.tablets[i].lock().snapshot(&range);
        snapshot.into_stream(&range, &self.stack)
    }

    /// Globally key-ordered scan; only tablets overlapping `range` are read.
    pub fn scan(&self, range: RowRange) -> impl Iterator<Item = Entry> + '_ {
        let probe = range.clone();
        (0..self.tablets.len())
            .filter(move |&i| self.splits.tablet_range(i).intersect(&probe).is_some())
            .flat_map(move |i| self.scan_tablet(i, &range))
    }

    pub fn scan_all(&self) -> impl Iterator<Item = Entry> + '_ {
        self.scan(RowRange::all())
    }

    /// Runs `f` over every tablet's full combined stream in parallel and
    /// returns the per-tablet results in tablet order.
    pub fn fold_tablets<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, EntryStream<'static>) -> T + Sync,
    {
        (0..self.tablets.len())
            .into_par_iter()
            .map(|i| f(i, self.scan_tablet(i, &RowRange::all())))
            .collect()
    }

    pub fn tablet_stats(&self) -> Vec<TabletStats> {
        self.tablets
            .iter()
            .zip(&self.scans)
            .map(|(t, s)| {
                let t = t.lock();
                TabletStats {
                    stored_entries: t.stored_entries(),
                    buffered_entries: t.buffered_entries(),
                    runs: t.runs.len(),
                    writes: t.write_count,
                    scans: s.load(Ordering::Relaxed),
                }
            })
            .collect()
    }

    /// Handles to the runs of tablet `i`, for structural inspection.
    pub fn runs(&self, i: usize) -> Vec<SortedRun> {
        self.tablets[i].lock().runs.clone()
    }
}

impl std::fmt::Debug for Table {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Table")
            .field("name", &self.name)
            .field("tablets", &self.tablets.len())
            .field("stack", &self.stack)
            .finish()
    }
}
