//! Matrix multiply over tables.
//!
//! [`outer_table_mult`] aligns two tables by row, hands each shared row to a
//! [`RowMultiply`] plugin and writes whatever it emits into a sink table,
//! whose combiners do the summation. [`inner_product_masked_count`] instead
//! evaluates masked dot products for a chosen set of rows and sums them on
//! the spot.

use std::collections::HashSet;
use std::iter::Peekable;
use std::num::NonZeroUsize;
use std::sync::Arc;

use lru::LruCache;
use rayon::prelude::*;

use crate::kvengine::{encode_u64, Bytes, Engine, EngineError, Entry, Key, RowRange, Table};
use crate::schema::VertexEncoding;

/// Entries buffered per worker before a batched put into the sink.
const SINK_BATCH: usize = 8192;

/// Per-row multiply. Output may depend only on the row's own entries.
pub trait RowMultiply: Send + Sync {
    /// Appends this row's filtered partial products to `out` and returns the
    /// number of partial products formed before filtering.
    fn multiply(&self, row: &[u8], left: &[Entry], right: &[Entry], out: &mut Vec<Entry>) -> u64;
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MultiplyStats {
    /// Partial products emitted, i.e. surviving the row multiply's filter.
    pub nppf: u64,
    /// Partial products formed before filtering.
    pub npp_total: u64,
    /// Emissions per left-operand tablet.
    pub per_tablet_emitted: Vec<u64>,
}

/// `(c, c', 2)` for every pair of columns `c < c'` in an upper-adjacency row.
#[derive(Clone, Copy, Debug, Default)]
pub struct RowMultiplyAdjacency;

impl RowMultiply for RowMultiplyAdjacency {
    fn multiply(&self, _row: &[u8], left: &[Entry], right: &[Entry], out: &mut Vec<Entry>) -> u64 {
        let two = encode_u64(2);
        for a in left {
            for b in right {
                if a.colq() < b.colq() {
                    out.push(Entry {
                        key: Key::new(a.colq(), b.colq()),
                        value: two.clone(),
                    });
                }
            }
        }
        (left.len() * right.len()) as u64
    }
}

/// Joins a lower-adjacency row `v` (columns `v1`) with the incidence row `v`
/// (edge labels `[v2, v3]`), emitting `(v1, [v2, v3], empty)` when `v1 < v2`.
/// Labels that do not parse under the encoding are skipped.
#[derive(Clone, Copy, Debug, Default)]
pub struct RowMultiplyAdjIncidence {
    pub encoding: VertexEncoding,
}

impl RowMultiply for RowMultiplyAdjIncidence {
    fn multiply(&self, _row: &[u8], left: &[Entry], right: &[Entry], out: &mut Vec<Entry>) -> u64 {
        for e in right {
            let Ok((v2, _)) = self.encoding.split_edge_label(e.colq()) else {
                continue;
            };
            for a in left {
                if a.colq() < v2 {
                    out.push(Entry::new(a.colq(), e.colq(), []));
                }
            }
        }
        (left.len() * right.len()) as u64
    }
}

/// Wraps a row multiply so that the listed rows produce nothing.
pub struct SkipRows<M> {
    pub inner: M,
    pub skip: HashSet<Bytes>,
}

impl<M: RowMultiply> RowMultiply for SkipRows<M> {
    fn multiply(&self, row: &[u8], left: &[Entry], right: &[Entry], out: &mut Vec<Entry>) -> u64 {
        if self.skip.contains(row) {
            return 0;
        }
        self.inner.multiply(row, left, right, out)
    }
}

/// Consecutive same-row entries of a key-ordered stream.
struct RowGroups<I: Iterator<Item = Entry>> {
    inner: Peekable<I>,
}

impl<I: Iterator<Item = Entry>> RowGroups<I> {
    fn new(inner: I) -> Self {
        RowGroups {
            inner: inner.peekable(),
        }
    }
}

impl<I: Iterator<Item = Entry>> Iterator for RowGroups<I> {
    type Item = (Bytes, Vec<Entry>);

    fn next(&mut self) -> Option<Self::Item> {
        let first = self.inner.next()?;
        let row = Bytes::from_slice(first.row());
        let mut group = vec![first];
        while let Some(e) = self.inner.next_if(|e| e.row() == &row[..]) {
            group.push(e);
        }
        Some((row, group))
    }
}

/// One-pass outer product: for every row present in both `left` and `right`,
/// `f(row, left_row, right_row)` is written to `sink`. Left tablets run in
/// parallel on the engine pool; each reads only the right operand's rows
/// inside its own row range. Passing the same table twice multiplies it by
/// itself from a single scan.
pub fn outer_table_mult(
    engine: &Engine,
    left: &Table,
    right: &Table,
    f: &dyn RowMultiply,
    sink: &Table,
) -> Result<MultiplyStats, EngineError> {
    let same = std::ptr::eq(left, right);
    let per_tablet = engine.install(|| {
        (0..left.n_tablets())
            .into_par_iter()
            .map(|i| {
                let range = left.splits().tablet_range(i);
                let lefts = RowGroups::new(left.scan_tablet(i, &RowRange::all()));
                let mut emitter = Emitter::new(sink);
                if same {
                    for (row, group) in lefts {
                        emitter.row(f, &row, &group, &group)?;
                    }
                } else {
                    let mut rights = RowGroups::new(right.scan(range)).peekable();
                    for (row, group) in lefts {
                        while rights.next_if(|(r, _)| *r < row).is_some() {}
                        if let Some((_, rgroup)) = rights.next_if(|(r, _)| *r == row) {
                            emitter.row(f, &row, &group, &rgroup)?;
                        }
                    }
                }
                emitter.finish()
            })
            .collect::<Result<Vec<_>, EngineError>>()
    })?;
    let mut stats = MultiplyStats::default();
    for (emitted, total) in per_tablet {
        stats.nppf += emitted;
        stats.npp_total += total;
        stats.per_tablet_emitted.push(emitted);
    }
    Ok(stats)
}

struct Emitter<'a> {
    sink: &'a Table,
    buf: Vec<Entry>,
    emitted: u64,
    total: u64,
}

impl<'a> Emitter<'a> {
    fn new(sink: &'a Table) -> Self {
        Emitter {
            sink,
            buf: Vec::with_capacity(SINK_BATCH),
            emitted: 0,
            total: 0,
        }
    }

    fn row(
        &mut self,
        f: &dyn RowMultiply,
        row: &[u8],
        l: &[Entry],
        r: &[Entry],
    ) -> Result<(), EngineError> {
        let before = self.buf.len();
        self.total += f.multiply(row, l, r, &mut self.buf);
        self.emitted += (self.buf.len() - before) as u64;
        if self.buf.len() >= SINK_BATCH {
            self.sink.put_batch(std::mem::replace(
                &mut self.buf,
                Vec::with_capacity(SINK_BATCH),
            ))?;
        }
        Ok(())
    }

    fn finish(self) -> Result<(u64, u64), EngineError> {
        if !self.buf.is_empty() {
            self.sink.put_batch(self.buf)?;
        }
        Ok((self.emitted, self.total))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InnerProductStats {
    /// Sum over the selected entries `(r, c)` of `|row_r ∩ row_c|`.
    pub triangles: u64,
    /// Nonzero partial products evaluated, one per common column.
    pub nppf: u64,
    /// Upper rows fetched from the table (cache misses).
    pub row_loads: u64,
}

/// Masked inner product over the selected rows of an upper-adjacency table:
/// for each stored `(r, c)` with `r` in `rows`, adds the size of the overlap
/// of rows `r` and `c`. Nothing is written back. Rows are fetched by ranged
/// scans and cached per worker, bounded by the engine's row cache capacity.
pub fn inner_product_masked_count(
    engine: &Engine,
    a_upper: &Table,
    rows: &[Bytes],
) -> InnerProductStats {
    let cap = NonZeroUsize::new(engine.config().row_cache_capacity.max(1)).expect("nonzero");
    let load = |row: &[u8]| -> Arc<Vec<Bytes>> {
        Arc::new(
            a_upper
                .scan(RowRange::row(row))
                .map(|e| Bytes::from_slice(e.colq()))
                .collect(),
        )
    };
    engine.install(|| {
        rows.par_iter()
            .map_init(
                || LruCache::<Bytes, Arc<Vec<Bytes>>>::new(cap),
                |cache, r| {
                    let mut stats = InnerProductStats::default();
                    let own = load(r);
                    stats.row_loads += 1;
                    for c in own.iter() {
                        let other = match cache.get(c) {
                            Some(hit) => hit.clone(),
                            None => {
                                let fetched = load(c);
                                stats.row_loads += 1;
                                cache.put(c.clone(), fetched.clone());
                                fetched
                            }
                        };
                        let common = sorted_overlap(&own, &other);
                        stats.triangles += common;
                        stats.nppf += common;
                    }
                    stats
                },
            )
            .reduce(InnerProductStats::default, |a, b| InnerProductStats {
                triangles: a.triangles + b.triangles,
                nppf: a.nppf + b.nppf,
                row_loads: a.row_loads + b.row_loads,
            })
    })
}

fn sorted_overlap(a: &[Bytes], b: &[Bytes]) -> u64 {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kvengine::{CombinerStack, SplitPoints};
    use crate::schema::{
        build_incidence, build_lower_adjacency, build_upper_adjacency, BuildOptions, EdgeList,
    };

    fn k3() -> EdgeList {
        EdgeList::from_pairs([(1, 2), (1, 3), (2, 3)])
    }

    fn v(x: u32) -> [u8; 4] {
        x.to_be_bytes()
    }

    fn collect(t: &Table) -> Vec<(Vec<u8>, Vec<u8>, Vec<u8>)> {
        t.scan_all()
            .map(|e| (e.row().to_vec(), e.colq().to_vec(), e.value.to_vec()))
            .collect()
    }

    fn opts(n: usize) -> BuildOptions {
        BuildOptions {
            n_tablets: n,
            ..BuildOptions::default()
        }
    }

    #[test]
    fn adjacency_row_multiply() {
        let row: Vec<Entry> = [2u32, 3, 5]
            .iter()
            .map(|&c| Entry::new(v(1), v(c), encode_u64(1)))
            .collect();
        let mut out = Vec::new();
        assert_eq!(
            RowMultiplyAdjacency.multiply(&v(1), &row, &row, &mut out),
            9
        );
        let keys: Vec<_> = out
            .iter()
            .map(|e| (e.row().to_vec(), e.colq().to_vec(), e.numeric()))
            .collect();
        assert_eq!(
            keys,
            vec![
                (v(2).to_vec(), v(3).to_vec(), Some(2)),
                (v(2).to_vec(), v(5).to_vec(), Some(2)),
                (v(3).to_vec(), v(5).to_vec(), Some(2)),
            ]
        );
        out.clear();
        RowMultiplyAdjacency.multiply(&v(1), &row[..1], &row[..1], &mut out);
        assert!(out.is_empty());
    }

    #[test]
    fn adj_incidence_row_multiply_k3() {
        let enc = VertexEncoding::FixedWidth;
        let label = |a, b| enc.edge_label(a, b).unwrap();
        let f = RowMultiplyAdjIncidence { encoding: enc };

        let a2 = vec![Entry::new(v(2), v(1), encode_u64(1))];
        let e2 = vec![
            Entry::new(v(2), label(1, 2), encode_u64(1)),
            Entry::new(v(2), label(2, 3), encode_u64(1)),
        ];
        let mut out = Vec::new();
        f.multiply(&v(2), &a2, &e2, &mut out);
        assert_eq!(out, vec![Entry::new(v(1), label(2, 3), [])]);

        let a3 = vec![
            Entry::new(v(3), v(1), encode_u64(1)),
            Entry::new(v(3), v(2), encode_u64(1)),
        ];
        let e3 = vec![
            Entry::new(v(3), label(1, 3), encode_u64(1)),
            Entry::new(v(3), label(2, 3), encode_u64(1)),
        ];
        out.clear();
        assert_eq!(f.multiply(&v(3), &a3, &e3, &mut out), 4);
        assert_eq!(out, vec![Entry::new(v(1), label(2, 3), [])]);

        out.clear();
        f.multiply(&v(4), &[], &e3, &mut out);
        assert!(out.is_empty());
    }

    #[test]
    fn outer_mult_k3_self() {
        let e = Engine::in_memory();
        let a = build_upper_adjacency(&e, "a", &k3(), opts(2)).unwrap();
        let sink = e
            .create_table("t", SplitPoints::none(), CombinerStack::summing())
            .unwrap();
        let stats = outer_table_mult(&e, &a, &a, &RowMultiplyAdjacency, &sink).unwrap();
        assert_eq!(stats.nppf, 1);
        assert_eq!(stats.npp_total, 4 + 1);
        assert_eq!(stats.per_tablet_emitted.iter().sum::<u64>(), 1);
        assert_eq!(
            collect(&sink),
            vec![(v(2).to_vec(), v(3).to_vec(), encode_u64(2).to_vec())]
        );
    }

    #[test]
    fn outer_mult_empty_left() {
        let e = Engine::in_memory();
        let a = build_upper_adjacency(&e, "a", &EdgeList::default(), opts(4)).unwrap();
        let b = build_upper_adjacency(&e, "b", &k3(), opts(4)).unwrap();
        let sink = e
            .create_table("t", SplitPoints::none(), CombinerStack::summing())
            .unwrap();
        let stats = outer_table_mult(&e, &a, &b, &RowMultiplyAdjacency, &sink).unwrap();
        assert_eq!((stats.nppf, stats.npp_total), (0, 0));
        assert_eq!(sink.scan_all().count(), 0);
    }

    struct Cross;

    impl RowMultiply for Cross {
        fn multiply(
            &self,
            row: &[u8],
            left: &[Entry],
            right: &[Entry],
            out: &mut Vec<Entry>,
        ) -> u64 {
            for a in left {
                for b in right {
                    out.push(Entry::new(
                        row,
                        [a.colq(), b.colq()].concat(),
                        encode_u64(1),
                    ));
                }
            }
            (left.len() * right.len()) as u64
        }
    }

    #[test]
    fn outer_mult_two_tables_join_on_rows() {
        let e = Engine::in_memory();
        let mk = |name: &str, rows: &[(u8, u8)], split: u8| {
            let t = e
                .create_table(
                    name,
                    SplitPoints::new([[split]]).unwrap(),
                    CombinerStack::summing(),
                )
                .unwrap();
            for &(r, c) in rows {
                t.put(Entry::new([r], [c], encode_u64(1))).unwrap();
            }
            t
        };
        let left = mk("l", &[(1, 2), (1, 3), (4, 1), (9, 9)], 3);
        let right = mk("r", &[(1, 2), (1, 3), (2, 0), (4, 5), (8, 8)], 6);
        let sink = e
            .create_table("s", SplitPoints::none(), CombinerStack::summing())
            .unwrap();
        let stats = outer_table_mult(&e, &left, &right, &Cross, &sink).unwrap();
        assert_eq!(stats.nppf, 4 + 1);
        assert_eq!(stats.per_tablet_emitted, vec![4, 1]);
        let got: Vec<_> = sink
            .scan_all()
            .map(|e| (e.row().to_vec(), e.colq().to_vec()))
            .collect();
        assert_eq!(
            got,
            vec![
                (vec![1], vec![2, 2]),
                (vec![1], vec![2, 3]),
                (vec![1], vec![3, 2]),
                (vec![1], vec![3, 3]),
                (vec![4], vec![1, 5]),
            ]
        );
    }

    #[test]
    fn adj_incidence_mult_k3() {
        let e = Engine::in_memory();
        let enc = VertexEncoding::FixedWidth;
        let lower = build_lower_adjacency(&e, "al", &k3(), opts(2)).unwrap();
        let inc = build_incidence(&e, "e", &k3(), opts(2)).unwrap();
        let sink = e
            .create_table("t", inc.splits().clone(), CombinerStack::empty())
            .unwrap();
        let stats = outer_table_mult(
            &e,
            &lower,
            &inc,
            &RowMultiplyAdjIncidence { encoding: enc },
            &sink,
        )
        .unwrap();
        assert_eq!(stats.nppf, 2);
        let label = enc.edge_label(2, 3).unwrap().to_vec();
        assert_eq!(
            collect(&sink),
            vec![
                (v(1).to_vec(), label.clone(), vec![]),
                (v(1).to_vec(), label, vec![])
            ]
        );
    }

    #[test]
    fn skip_rows_suppresses_output() {
        let row: Vec<Entry> = [2u32, 3]
            .iter()
            .map(|&c| Entry::new(v(1), v(c), encode_u64(1)))
            .collect();
        let f = SkipRows {
            inner: RowMultiplyAdjacency,
            skip: [Bytes::from_slice(&v(1))].into_iter().collect(),
        };
        let mut out = Vec::new();
        assert_eq!(f.multiply(&v(1), &row, &row, &mut out), 0);
        assert!(out.is_empty());
        assert_eq!(f.multiply(&v(7), &row, &row, &mut out), 4);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn inner_product_k3_and_path() {
        let e = Engine::in_memory();
        let a = build_upper_adjacency(&e, "a", &k3(), opts(2)).unwrap();
        let rows = |xs: &[u32]| {
            xs.iter()
                .map(|&x| Bytes::from_slice(&v(x)))
                .collect::<Vec<_>>()
        };
        let one = inner_product_masked_count(&e, &a, &rows(&[1]));
        assert_eq!((one.triangles, one.nppf), (1, 1));
        let all = inner_product_masked_count(&e, &a, &rows(&[1, 2, 3]));
        assert_eq!(all.triangles, 1);
        let none = inner_product_masked_count(&e, &a, &[]);
        assert_eq!((none.triangles, none.nppf), (0, 0));

        let p = build_upper_adjacency(
            &e,
            "p",
            &EdgeList::from_pairs((0..9).map(|i| (i, i + 1))),
            opts(3),
        )
        .unwrap();
        assert_eq!(
            inner_product_masked_count(&e, &p, &rows(&(0..10).collect::<Vec<_>>())).triangles,
            0
        );
    }

    #[test]
    fn sorted_overlap_counts_common() {
        let b = |xs: &[u8]| {
            xs.iter()
                .map(|&x| Bytes::from_slice(&[x]))
                .collect::<Vec<_>>()
        };
        assert_eq!(sorted_overlap(&b(&[1, 3, 5, 7]), &b(&[2, 3, 4, 7, 9])), 2);
        assert_eq!(sorted_overlap(&b(&[]), &b(&[1])), 0);
    }
}
