use std::collections::{btree_map, BTreeMap};
use std::io;
use std::ops::Bound;

use itertools::Itertools;
use smallvec::SmallVec;

use super::combiner::{CombinerStack, EntryStream};
use super::key::{Bytes, Entry, Key};
use super::run::{RunStore, SortedRun};
use super::splits::RowRange;

// per-entry bookkeeping overhead counted against the buffer limit
const ENTRY_OVERHEAD: usize = 48;

#[derive(Default)]
pub(crate) struct Tablet {
    buffer: BTreeMap<Key, SmallVec<[Bytes; 1]>>,
    buffer_bytes: usize,
    buffer_entries: usize,
    pub(crate) runs: Vec<SortedRun>,
    pub(crate) write_count: u64,
}

/// Point-in-time view of a tablet, detached from its lock.
pub(crate) struct Snapshot {
    buffered: Vec<Entry>,
    runs: Vec<SortedRun>,
}

impl Tablet {
    pub(crate) fn with_runs(runs: Vec<SortedRun>) -> Self {
        Tablet {
            runs,
            ..Tablet::default()
        }
    }

    pub(crate) fn buffer_bytes(&self) -> usize {
        self.buffer_bytes
    }

    pub(crate) fn buffered_entries(&self) -> usize {
        self.buffer_entries
    }

    pub(crate) fn stored_entries(&self) -> usize {
        self.buffer_entries + self.runs.iter().map(SortedRun::len).sum::<usize>()
    }

    pub(crate) fn insert(&mut self, entry: Entry, stack: &CombinerStack) {
        self.write_count += 1;
        let weight = entry.weight();
        let Entry { key, value } = entry;
        match self.buffer.entry(key) {
            btree_map::Entry::Occupied(mut slot) => match stack.insert_combiner() {
                Some(c) => {
                    let acc = std::mem::take(&mut slot.get_mut()[0]);
                    let before = acc.len();
                    let merged = c.combine(slot.key(), acc, &value);
                    self.buffer_bytes = self.buffer_bytes + merged.len() - before;
                    slot.get_mut()[0] = merged;
                }
                None => {
                    self.buffer_bytes += value.len() + ENTRY_OVERHEAD;
                    self.buffer_entries += 1;
                    slot.get_mut().push(value);
                }
            },
            btree_map::Entry::Vacant(slot) => {
                self.buffer_bytes += weight + ENTRY_OVERHEAD;
                self.buffer_entries += 1;
                slot.insert(smallvec::smallvec![value]);
            }
        }
    }

    fn drain_buffer(&mut self) -> Vec<Entry> {
        let buffer = std::mem::take(&mut self.buffer);
        self.buffer_bytes = 0;
        self.buffer_entries = 0;
        flatten(buffer.into_iter())
    }

    /// Spills the buffer into a new run with the combiner stack applied.
    pub(crate) fn flush(&mut self, stack: &CombinerStack, store: &RunStore) -> io::Result<()> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        let entries = self.drain_buffer();
        if let Some(run) = store.write(stack.apply(Box::new(entries.into_iter())))? {
            self.runs.push(run);
        }
        Ok(())
    }

    /// Merges the buffer and every run into at most one run.
    pub(crate) fn compact(&mut self, stack: &CombinerStack, store: &RunStore) -> io::Result<()> {
        if self.buffer.is_empty() && self.runs.len() <= 1 {
            return Ok(());
        }
        let buffered = self.drain_buffer();
        let runs = std::mem::take(&mut self.runs);
        let merged = merge_sources(buffered, &runs, &RowRange::all());
        if let Some(run) = store.write(stack.apply(merged))? {
            self.runs.push(run);
        }
        Ok(())
    }

    pub(crate) fn snapshot(&self, range: &RowRange) -> Snapshot {
        let lower = match &range.start {
            Bound::Unbounded => Bound::Unbounded,
            Bound::Included(r) => Bound::Included(Key::new(r, [])),
            // rows > r: every key of row r sorts below (r + [0], [])
            Bound::Excluded(r) => {
                let mut next = r.clone();
                next.push(0);
                Bound::Included(Key::new(next, []))
            }
        };
        let buffered = flatten(
            self.buffer
                .range((lower, Bound::Unbounded))
                .take_while(|(k, _)| !range.past_end(k.row()))
                .map(|(k, v)| (k.clone(), v.clone())),
        );
        Snapshot {
            buffered,
            runs: self.runs.clone(),
        }
    }
}

impl Snapshot {
    /// Combined, key-ordered view restricted to `range`.
    pub(crate) fn into_stream(
        self,
        range: &RowRange,
        stack: &CombinerStack,
    ) -> EntryStream<'static> {
        stack.apply(merge_sources(self.buffered, &self.runs, range))
    }
}

fn flatten(it: impl Iterator<Item = (Key, SmallVec<[Bytes; 1]>)>) -> Vec<Entry> {
    let mut out = Vec::new();
    for (key, values) in it {
        for value in values {
            out.push(Entry {
                key: key.clone(),
                value,
            });
        }
    }
    out
}

fn merge_sources(
    buffered: Vec<Entry>,
    runs: &[SortedRun],
    range: &RowRange,
) -> EntryStream<'static> {
    let start = match &range.start {
        Bound::Unbounded => None,
        Bound::Included(r) => Some((r.clone(), false)),
        Bound::Excluded(r) => Some((r.clone(), true)),
    };
    let mut sources: Vec<EntryStream<'static>> = Vec::with_capacity(runs.len() + 1);
    for run in runs {
        let it = match &start {
            None => run.iter(),
            Some((r, excl)) => run.iter_from(Some((r.as_slice(), *excl))),
        };
        sources.push(Box::new(it));
    }
    sources.push(Box::new(buffered.into_iter()));
    let range = range.clone();
    let merged = sources
        .into_iter()
        .kmerge_by(|a, b| a.cmp_key(b).is_lt())
        .take_while(move |e| !range.past_end(e.row()));
    Box::new(merged)
}
