use std::fmt;
use std::iter::Peekable;
use std::sync::Arc;

use super::key::{decode_u64, encode_u64, Bytes, Entry, Key};

/// Boxed entry stream passed between stack stages.
pub type EntryStream<'a> = Box<dyn Iterator<Item = Entry> + Send + 'a>;

/// Reduction over the values of one key.
///
/// Implementations must be associative: folding any grouping of a key's
/// values in any order of flush, compaction and scan gives the same result.
pub trait KeyCombiner: Send + Sync {
    fn combine(&self, key: &Key, acc: Bytes, next: &[u8]) -> Bytes;

    fn name(&self) -> &str;
}

/// Rewrite of a whole key-ordered entry stream; may look across keys.
/// Output must remain key-ordered.
pub trait StreamIterator: Send + Sync {
    fn apply<'a>(&self, input: EntryStream<'a>) -> EntryStream<'a>;

    fn name(&self) -> &str;
}

#[derive(Clone)]
pub enum Combiner {
    KeyLocal(Arc<dyn KeyCombiner>),
    KeySpanning(Arc<dyn StreamIterator>),
}

impl Combiner {
    pub fn key_local(c: impl KeyCombiner + 'static) -> Self {
        Combiner::KeyLocal(Arc::new(c))
    }

    pub fn key_spanning(c: impl StreamIterator + 'static) -> Self {
        Combiner::KeySpanning(Arc::new(c))
    }

    pub fn name(&self) -> &str {
        match self {
            Combiner::KeyLocal(c) => c.name(),
            Combiner::KeySpanning(c) => c.name(),
        }
    }
}

impl fmt::Debug for Combiner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Combiner::KeyLocal(c) => write!(f, "KeyLocal({})", c.name()),
            Combiner::KeySpanning(c) => write!(f, "KeySpanning({})", c.name()),
        }
    }
}

/// Ordered list of combiners attached to a table.
///
/// Buffer inserts merge duplicate keys with the leading key-local combiner
/// (if the stack starts with one). Flush, compaction and scan run the whole
/// stack in order. With no key-local combiner, duplicate keys are retained
/// as separate versions.
#[derive(Clone, Debug, Default)]
pub struct CombinerStack {
    items: Vec<Combiner>,
}

impl CombinerStack {
    pub fn new(items: Vec<Combiner>) -> Self {
        CombinerStack { items }
    }

    pub fn empty() -> Self {
        CombinerStack::default()
    }

    pub fn summing() -> Self {
        CombinerStack::new(vec![Combiner::key_local(SumCombiner)])
    }

    pub fn items(&self) -> &[Combiner] {
        &self.items
    }

    pub(crate) fn insert_combiner(&self) -> Option<&Arc<dyn KeyCombiner>> {
        match self.items.first() {
            Some(Combiner::KeyLocal(c)) => Some(c),
            _ => None,
        }
    }

    pub fn apply<'a>(&self, mut stream: EntryStream<'a>) -> EntryStream<'a> {
        for c in &self.items {
            stream = match c {
                Combiner::KeyLocal(k) => Box::new(KeyFold::new(stream, k.clone())),
                Combiner::KeySpanning(s) => s.apply(stream),
            };
        }
        stream
    }
}

/// Sums 8-byte big-endian counters. Operands that are not 8 bytes wide
/// count as zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct SumCombiner;

impl KeyCombiner for SumCombiner {
    fn combine(&self, _key: &Key, acc: Bytes, next: &[u8]) -> Bytes {
        let a = decode_u64(&acc).unwrap_or(0);
        let b = decode_u64(next).unwrap_or(0);
        encode_u64(a.wrapping_add(b))
    }

    fn name(&self) -> &str {
        "sum"
    }
}

/// Folds runs of equal keys with a key-local combiner.
pub struct KeyFold<I: Iterator<Item = Entry>> {
    inner: Peekable<I>,
    combiner: Arc<dyn KeyCombiner>,
}

impl<I: Iterator<Item = Entry>> KeyFold<I> {
    pub fn new(inner: I, combiner: Arc<dyn KeyCombiner>) -> Self {
        KeyFold {
            inner: inner.peekable(),
            combiner,
        }
    }
}

impl<I: Iterator<Item = Entry>> Iterator for KeyFold<I> {
    type Item = Entry;

    fn next(&mut self) -> Option<Entry> {
        let mut cur = self.inner.next()?;
        while let Some(next) = self.inner.next_if(|n| n.key == cur.key) {
            cur.value = self.combiner.combine(&cur.key, cur.value, &next.value);
        }
        Some(cur)
    }
}
