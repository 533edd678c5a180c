use std::collections::VecDeque;
use std::iter::Peekable;

use crate::kvengine::{decode_u64, encode_u64, Entry, EntryStream, StreamIterator};

/// Turns two empty-valued entries under the same key into one entry of
/// value 1. A lone empty entry passes through, as do numeric entries; a
/// numeric value is never paired with an empty one. Pairing is per key
/// group, so two halves arriving from different runs still meet.
#[derive(Clone, Copy, Debug, Default)]
pub struct PairCollapseIterator;

impl StreamIterator for PairCollapseIterator {
    fn apply<'a>(&self, input: EntryStream<'a>) -> EntryStream<'a> {
        Box::new(PairCollapse {
            inner: input.peekable(),
            out: VecDeque::new(),
        })
    }

    fn name(&self) -> &str {
        "pair-collapse"
    }
}

struct PairCollapse<I: Iterator<Item = Entry>> {
    inner: Peekable<I>,
    out: VecDeque<Entry>,
}

impl<I: Iterator<Item = Entry>> Iterator for PairCollapse<I> {
    type Item = Entry;

    fn next(&mut self) -> Option<Entry> {
        if let Some(e) = self.out.pop_front() {
            return Some(e);
        }
        let first = self.inner.next()?;
        if self.inner.peek().is_none_or(|n| n.key != first.key) {
            return Some(first);
        }
        let mut empties = Vec::new();
        let mut group = vec![first];
        while let Some(e) = self.inner.next_if(|n| n.key == group[0].key) {
            group.push(e);
        }
        for e in group {
            if e.value.is_empty() {
                empties.push(e);
            } else {
                self.out.push_back(e);
            }
        }
        let mut empties = empties.into_iter();
        while let Some(mut a) = empties.next() {
            if empties.next().is_some() {
                a.value = encode_u64(1);
            }
            self.out.push_back(a);
        }
        self.out.pop_front()
    }
}

/// Sums every numeric value in the stream into one running entry regardless
/// of key. Empty-valued entries pass through unchanged. The running total
/// is emitted under the key of the last numeric entry folded into it, just
/// before the next empty entry or at the end of the stream, which keeps the
/// output key-ordered.
#[derive(Clone, Copy, Debug, Default)]
pub struct NumericSumIterator;

impl StreamIterator for NumericSumIterator {
    fn apply<'a>(&self, input: EntryStream<'a>) -> EntryStream<'a> {
        Box::new(NumericSum {
            inner: input,
            pending: None,
            held: None,
        })
    }

    fn name(&self) -> &str {
        "numeric-sum"
    }
}

struct NumericSum<I: Iterator<Item = Entry>> {
    inner: I,
    pending: Option<(Entry, u64)>,
    held: Option<Entry>,
}

impl<I: Iterator<Item = Entry>> NumericSum<I> {
    fn take_pending(&mut self) -> Option<Entry> {
        self.pending.take().map(|(mut e, sum)| {
            e.value = encode_u64(sum);
            e
        })
    }
}

impl<I: Iterator<Item = Entry>> Iterator for NumericSum<I> {
    type Item = Entry;

    fn next(&mut self) -> Option<Entry> {
        if let Some(e) = self.held.take() {
            return Some(e);
        }
        loop {
            let Some(e) = self.inner.next() else {
                return self.take_pending();
            };
            if e.value.is_empty() {
                return match self.take_pending() {
                    Some(sum) => {
                        self.held = Some(e);
                        Some(sum)
                    }
                    None => Some(e),
                };
            }
            let add = decode_u64(&e.value).unwrap_or(0);
            let sum = self.pending.take().map_or(0, |(_, s)| s).wrapping_add(add);
            self.pending = Some((e, sum));
        }
    }
}
