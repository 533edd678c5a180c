//! Immutable sorted runs.
//!
//! A run is a key-ordered sequence of entries in a compact length-prefixed
//! byte layout. The same layout backs both in-memory runs and spill files,
//! so the merge and iterator machinery never needs to know where a run
//! lives. Runs are reference counted; cloning a table shares them.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use tempfile::TempPath;

use super::key::{Bytes, Entry, Key};

/// Every `INDEX_STRIDE`-th entry of a disk run is indexed for seeks.
const INDEX_STRIDE: usize = 64;

#[derive(Clone)]
pub struct SortedRun(Arc<RunData>);

enum RunData {
    Memory {
        data: Vec<u8>,
        offsets: Vec<usize>,
    },
    Disk {
        path: TempPath,
        len: usize,
        // (row of entry, byte offset, entry index)
        index: Vec<(Bytes, u64, usize)>,
    },
}

impl SortedRun {
    pub fn len(&self) -> usize {
        match &*self.0 {
            RunData::Memory { offsets, .. } => offsets.len(),
            RunData::Disk { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_on_disk(&self) -> bool {
        matches!(&*self.0, RunData::Disk { .. })
    }

    /// True when both handles refer to the same stored run.
    pub fn same_run(&self, other: &SortedRun) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn iter(&self) -> RunIter {
        self.iter_from(None)
    }

    /// Iterates entries whose row is `>= start` (or `> start` when
    /// `exclusive`).
    pub fn iter_from(&self, start: Option<(&[u8], bool)>) -> RunIter {
        match &*self.0 {
            RunData::Memory { data, offsets } => {
                let pos = match start {
                    None => 0,
                    Some((row, exclusive)) => offsets.partition_point(|&off| {
                        let r = decode_row_at(data, off);
                        if exclusive {
                            r <= row
                        } else {
                            r < row
                        }
                    }),
                };
                RunIter(Cursor::Memory {
                    run: self.0.clone(),
                    pos,
                })
            }
            RunData::Disk { path, len, index } => {
                let (offset, skip_from) = match start {
                    None => (0, 0),
                    Some((row, _)) => {
                        // last indexed entry strictly before `row`
                        let i = index.partition_point(|(r, _, _)| r.as_slice() < row);
                        if i == 0 {
                            (0, 0)
                        } else {
                            (index[i - 1].1, index[i - 1].2)
                        }
                    }
                };
                let mut file = File::open(path).expect("spill file missing");
                file.seek(SeekFrom::Start(offset)).expect("spill file seek");
                let mut it = RunIter(Cursor::Disk {
                    reader: BufReader::with_capacity(64 * 1024, file),
                    remaining: len - skip_from,
                    pending: None,
                });
                if let Some((row, exclusive)) = start {
                    it.skip_before(row, exclusive);
                }
                it
            }
        }
    }
}

impl std::fmt::Debug for SortedRun {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SortedRun")
            .field("len", &self.len())
            .field("on_disk", &self.is_on_disk())
            .finish()
    }
}

pub struct RunIter(Cursor);

enum Cursor {
    Memory {
        run: Arc<RunData>,
        pos: usize,
    },
    Disk {
        reader: BufReader<File>,
        remaining: usize,
        pending: Option<Entry>,
    },
}

impl RunIter {
    fn skip_before(&mut self, row: &[u8], exclusive: bool) {
        while let Some(e) = self.next() {
            let keep = if exclusive {
                e.row() > row
            } else {
                e.row() >= row
            };
            if keep {
                if let Cursor::Disk { pending, .. } = &mut self.0 {
                    *pending = Some(e);
                }
                return;
            }
        }
    }
}

impl Iterator for RunIter {
    type Item = Entry;

    fn next(&mut self) -> Option<Entry> {
        match &mut self.0 {
            Cursor::Memory { run, pos } => {
                let RunData::Memory { data, offsets } = &**run else {
                    unreachable!()
                };
                let off = *offsets.get(*pos)?;
                *pos += 1;
                Some(decode_at(data, off).0)
            }
            Cursor::Disk {
                reader,
                remaining,
                pending,
            } => {
                if let Some(e) = pending.take() {
                    return Some(e);
                }
                if *remaining == 0 {
                    return None;
                }
                *remaining -= 1;
                Some(read_entry(reader).expect("spill file read"))
            }
        }
    }
}

/// Where newly written runs go.
#[derive(Clone, Debug, Default)]
pub struct RunStore {
    spill_dir: Option<PathBuf>,
}

impl RunStore {
    pub fn memory() -> Self {
        RunStore { spill_dir: None }
    }

    pub fn spill_to(dir: impl Into<PathBuf>) -> Self {
        RunStore {
            spill_dir: Some(dir.into()),
        }
    }

    pub fn spill_dir(&self) -> Option<&Path> {
        self.spill_dir.as_deref()
    }

    /// Writes a key-ordered entry stream as a run. Returns `None` for an
    /// empty stream.
    pub fn write<I: IntoIterator<Item = Entry>>(
        &self,
        entries: I,
    ) -> io::Result<Option<SortedRun>> {
        match &self.spill_dir {
            None => {
                let mut data = Vec::new();
                let mut offsets = Vec::new();
                for e in entries {
                    offsets.push(data.len());
                    encode_into(&mut data, &e);
                }
                if offsets.is_empty() {
                    return Ok(None);
                }
                data.shrink_to_fit();
                Ok(Some(SortedRun(Arc::new(RunData::Memory { data, offsets }))))
            }
            Some(dir) => {
                let file = tempfile::Builder::new()
                    .prefix("run-")
                    .suffix(".kv")
                    .tempfile_in(dir)?;
                let (file, path) = file.into_parts();
                let mut w = BufWriter::with_capacity(64 * 1024, file);
                let mut buf = Vec::new();
                let mut index = Vec::new();
                let mut offset = 0u64;
                let mut len = 0usize;
                for e in entries {
                    if len.is_multiple_of(INDEX_STRIDE) {
                        index.push((Bytes::from_slice(e.row()), offset, len));
                    }
                    buf.clear();
                    encode_into(&mut buf, &e);
                    w.write_all(&buf)?;
                    offset += buf.len() as u64;
                    len += 1;
                }
                w.flush()?;
                if len == 0 {
                    return Ok(None);
                }
                Ok(Some(SortedRun(Arc::new(RunData::Disk {
                    path,
                    len,
                    index,
                }))))
            }
        }
    }
}

// Layout: u32 row len | row | u32 colq len | colq | u32 value len | value,
// lengths little-endian.
fn encode_into(out: &mut Vec<u8>, e: &Entry) {
    for part in [e.row(), e.colq(), e.value.as_slice()] {
        out.extend_from_slice(&(part.len() as u32).to_le_bytes());
        out.extend_from_slice(part);
    }
}

fn read_len(data: &[u8], at: usize) -> usize {
    u32::from_le_bytes(data[at..at + 4].try_into().unwrap()) as usize
}

fn decode_row_at(data: &[u8], off: usize) -> &[u8] {
    let n = read_len(data, off);
    &data[off + 4..off + 4 + n]
}

fn decode_at(data: &[u8], mut off: usize) -> (Entry, usize) {
    let mut parts: [&[u8]; 3] = [&[]; 3];
    for p in parts.iter_mut() {
        let n = read_len(data, off);
        *p = &data[off + 4..off + 4 + n];
        off += 4 + n;
    }
    let e = Entry {
        key: Key::new(parts[0], parts[1]),
        value: Bytes::from_slice(parts[2]),
    };
    (e, off)
}

fn read_entry<R: Read>(r: &mut R) -> io::Result<Entry> {
    let mut parts: [Bytes; 3] = Default::default();
    for p in parts.iter_mut() {
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let n = u32::from_le_bytes(len) as usize;
        p.resize(n, 0);
        r.read_exact(p)?;
    }
    let [row, colq, value] = parts;
    Ok(Entry {
        key: Key::new(row, colq),
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Entry> {
        (0u8..200)
            .map(|i| Entry::new([i / 3], [i % 3], if i % 7 == 0 { vec![] } else { vec![i] }))
            .collect()
    }

    fn check_store(store: RunStore) {
        let entries = sample();
        let run = store.write(entries.clone()).unwrap().unwrap();
        assert_eq!(run.len(), entries.len());
        assert_eq!(run.iter().collect::<Vec<_>>(), entries);

        let from: Vec<_> = run.iter_from(Some((&[10], false))).collect();
        let expect: Vec<_> = entries
            .iter()
            .filter(|e| e.row() >= &[10][..])
            .cloned()
            .collect();
        assert_eq!(from, expect);

        let after: Vec<_> = run.iter_from(Some((&[10], true))).collect();
        let expect: Vec<_> = entries
            .iter()
            .filter(|e| e.row() > &[10][..])
            .cloned()
            .collect();
        assert_eq!(after, expect);

        assert!(run.iter_from(Some((&[250], false))).next().is_none());
        assert!(store.write(Vec::<Entry>::new()).unwrap().is_none());
    }

    #[test]
    fn memory_run_round_trip() {
        check_store(RunStore::memory());
    }

    #[test]
    fn disk_run_round_trip_and_cleanup() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::spill_to(dir.path());
        check_store(store.clone());
        let run = store.write(sample()).unwrap().unwrap();
        assert!(run.is_on_disk());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        drop(run);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn empty_values_survive() {
        let run = RunStore::memory()
            .write(vec![Entry::new([1], [2], [])])
            .unwrap()
            .unwrap();
        let e = run.iter().next().unwrap();
        assert!(e.value.is_empty());
    }
}
