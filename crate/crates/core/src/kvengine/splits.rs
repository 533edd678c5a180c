use std::ops::Bound;

use super::key::{Bytes, Entry};
use super::EngineError;

/// Tablet boundaries. Tablet `i` owns rows `r` with
/// `boundaries[i-1] < r <= boundaries[i]`; the last tablet is unbounded above.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitPoints {
    boundaries: Vec<Bytes>,
}

impl SplitPoints {
    pub fn none() -> Self {
        SplitPoints::default()
    }

    pub fn new<I, B>(boundaries: I) -> Result<Self, EngineError>
    where
        I: IntoIterator<Item = B>,
        B: AsRef<[u8]>,
    {
        let boundaries: Vec<Bytes> = boundaries
            .into_iter()
            .map(|b| Bytes::from_slice(b.as_ref()))
            .collect();
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EngineError::InvalidSplits);
        }
        Ok(SplitPoints { boundaries })
    }

    pub fn boundaries(&self) -> &[Bytes] {
        &self.boundaries
    }

    pub fn n_tablets(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn tablet_for(&self, row: &[u8]) -> usize {
        self.boundaries.partition_point(|b| b.as_slice() < row)
    }

    /// Row range owned by tablet `i`.
    pub fn tablet_range(&self, i: usize) -> RowRange {
        let start = match i {
            0 => Bound::Unbounded,
            _ => Bound::Excluded(self.boundaries[i - 1].clone()),
        };
        let end = match self.boundaries.get(i) {
            Some(b) => Bound::Included(b.clone()),
            None => Bound::Unbounded,
        };
        RowRange { start, end }
    }
}

/// An interval over rows. Both ends may be open, closed or unbounded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowRange {
    pub start: Bound<Bytes>,
    pub end: Bound<Bytes>,
}

impl RowRange {
    pub fn all() -> Self {
        RowRange {
            start: Bound::Unbounded,
            end: Bound::Unbounded,
        }
    }

    pub fn row(row: impl AsRef<[u8]>) -> Self {
        let r = Bytes::from_slice(row.as_ref());
        RowRange {
            start: Bound::Included(r.clone()),
            end: Bound::Included(r),
        }
    }

    /// `[start, end]`, both inclusive.
    pub fn closed(start: impl AsRef<[u8]>, end: impl AsRef<[u8]>) -> Self {
        RowRange {
            start: Bound::Included(Bytes::from_slice(start.as_ref())),
            end: Bound::Included(Bytes::from_slice(end.as_ref())),
        }
    }

    pub fn contains(&self, row: &[u8]) -> bool {
        !self.before_start(row) && !self.past_end(row)
    }

    pub(crate) fn before_start(&self, row: &[u8]) -> bool {
        match &self.start {
            Bound::Unbounded => false,
            Bound::Included(s) => row < s.as_slice(),
            Bound::Excluded(s) => row <= s.as_slice(),
        }
    }

    pub(crate) fn past_end(&self, row: &[u8]) -> bool {
        match &self.end {
            Bound::Unbounded => false,
            Bound::Included(e) => row > e.as_slice(),
            Bound::Excluded(e) => row >= e.as_slice(),
        }
    }

    /// Intersection with another range; `None` when provably empty.
    pub fn intersect(&self, other: &RowRange) -> Option<RowRange> {
        let start = tighter_start(&self.start, &other.start);
        let end = tighter_end(&self.end, &other.end);
        let empty = match (&start, &end) {
            (Bound::Included(s), Bound::Included(e)) => s > e,
            (Bound::Included(s), Bound::Excluded(e))
            | (Bound::Excluded(s), Bound::Included(e))
            | (Bound::Excluded(s), Bound::Excluded(e)) => s >= e,
            _ => false,
        };
        (!empty).then_some(RowRange { start, end })
    }
}

fn tighter_start(a: &Bound<Bytes>, b: &Bound<Bytes>) -> Bound<Bytes> {
    match (a, b) {
        (Bound::Unbounded, x) | (x, Bound::Unbounded) => x.clone(),
        (Bound::Included(x), Bound::Included(y)) => Bound::Included(x.max(y).clone()),
        (Bound::Excluded(x), Bound::Excluded(y)) => Bound::Excluded(x.max(y).clone()),
        (Bound::Included(i), Bound::Excluded(e)) | (Bound::Excluded(e), Bound::Included(i)) => {
            if i > e {
                Bound::Included(i.clone())
            } else {
                Bound::Excluded(e.clone())
            }
        }
    }
}

fn tighter_end(a: &Bound<Bytes>, b: &Bound<Bytes>) -> Bound<Bytes> {
    match (a, b) {
        (Bound::Unbounded, x) | (x, Bound::Unbounded) => x.clone(),
        (Bound::Included(x), Bound::Included(y)) => Bound::Included(x.min(y).clone()),
        (Bound::Excluded(x), Bound::Excluded(y)) => Bound::Excluded(x.min(y).clone()),
        (Bound::Included(i), Bound::Excluded(e)) | (Bound::Excluded(e), Bound::Included(i)) => {
            if i < e {
                Bound::Included(i.clone())
            } else {
                Bound::Excluded(e.clone())
            }
        }
    }
}

/// Chooses row-aligned boundaries so that every tablet holds close to
/// `total / n_tablets` entries.
///
/// The result never splits a row and produces at most `n_tablets` tablets.
/// Every tablet's count `s` satisfies `|s - total/n_tablets| <= m` and
/// `max(s) - min(s) <= m`, where `m` is the largest row's entry count.
/// Among partitions meeting both bounds, the one with the most tablets is
/// preferred.
pub fn compute_equal_splits<'a, I>(entries: I, n_tablets: usize) -> Result<SplitPoints, EngineError>
where
    I: IntoIterator<Item = &'a Entry>,
{
    if n_tablets < 1 {
        return Err(EngineError::InvalidTabletCount(n_tablets));
    }
    let mut rows: Vec<(Bytes, u64)> = Vec::new();
    for e in entries {
        match rows.last_mut() {
            Some((r, c)) if r.as_slice() == e.row() => *c += 1,
            _ => rows.push((Bytes::from_slice(e.row()), 1)),
        }
    }
    if n_tablets == 1 || rows.len() <= 1 {
        return Ok(SplitPoints::none());
    }
    let sizes: Vec<u64> = rows.iter().map(|(_, c)| *c).collect();
    let cuts = balanced_cuts(&sizes, n_tablets);
    SplitPoints::new(cuts.into_iter().map(|i| rows[i - 1].0.clone()))
}

/// Returns cut positions (a cut at `i` ends a tablet after row `i - 1`).
fn balanced_cuts(sizes: &[u64], n: usize) -> Vec<usize> {
    let len = sizes.len();
    let max_parts = n.min(len);
    let total: u64 = sizes.iter().sum();
    let m = *sizes.iter().max().expect("non-empty");
    let mut prefix = Vec::with_capacity(len + 1);
    prefix.push(0u64);
    for s in sizes {
        prefix.push(prefix.last().unwrap() + s);
    }

    // Tablet sums must lie in [lo, lo + m]. With n tablets the smallest sum is
    // at most total/n, so scan window starts near the ideal first.
    let ideal_lo = (total as i128 * 2 - (n as i128) * m as i128) / (2 * n as i128);
    let lo_min = (total / n as u64).saturating_sub(m);
    let lo_max = total.div_ceil(n as u64) + m;
    let mut candidates: Vec<u64> = (lo_min..=lo_max).collect();
    candidates.sort_by_key(|&lo| (lo as i128 - ideal_lo).abs());

    for lo in candidates {
        // Intersect the window with |n*s - total| <= n*m.
        let a = lo
            .max(total.saturating_sub(n as u64 * m).div_ceil(n as u64))
            .max(1);
        let b = (lo + m).min((total + n as u64 * m) / n as u64);
        if a > b {
            continue;
        }
        if let Some(cuts) = partition_within(&prefix, max_parts, a, b) {
            return cuts;
        }
    }
    greedy_cuts(&prefix, max_parts)
}

/// Finds a partition into at most `n` contiguous parts with every sum in
/// `[a, b]`, maximising the number of parts.
fn partition_within(prefix: &[u64], n: usize, a: u64, b: u64) -> Option<Vec<usize>> {
    let len = prefix.len() - 1;
    // reach[k][j]: prefix j reachable with exactly k parts.
    let mut reach = vec![vec![false; len + 1]; n + 1];
    reach[0][0] = true;
    for k in 1..=n {
        let (done, rest) = reach.split_at_mut(k);
        let prev = &done[k - 1];
        let cur = &mut rest[0];
        // count of reachable predecessors for O(1) range queries
        let mut acc = Vec::with_capacity(len + 2);
        acc.push(0usize);
        for &r in prev.iter() {
            acc.push(acc.last().unwrap() + r as usize);
        }
        for (j, slot) in cur.iter_mut().enumerate().skip(1) {
            let (lo_i, hi_i) = predecessor_range(prefix, j, a, b);
            if lo_i <= hi_i && acc[hi_i + 1] > acc[lo_i] {
                *slot = true;
            }
        }
    }
    let k = (1..=n).rev().find(|&k| reach[k][len])?;
    let mut cuts = Vec::with_capacity(k - 1);
    let mut j = len;
    for parts in (1..=k).rev() {
        let (lo_i, hi_i) = predecessor_range(prefix, j, a, b);
        let i = (lo_i..=hi_i).rev().find(|&i| reach[parts - 1][i])?;
        if i > 0 {
            cuts.push(i);
        }
        j = i;
    }
    cuts.reverse();
    Some(cuts)
}

/// Indices `i < j` with `a <= prefix[j] - prefix[i] <= b`, as an inclusive
/// range (empty when `lo > hi`).
fn predecessor_range(prefix: &[u64], j: usize, a: u64, b: u64) -> (usize, usize) {
    let pj = prefix[j];
    if pj < a {
        return (1, 0);
    }
    let lo = prefix[..j].partition_point(|&p| p + b < pj);
    let hi_excl = prefix[..j].partition_point(|&p| p + a <= pj);
    if hi_excl == 0 {
        return (1, 0);
    }
    (lo, hi_excl - 1)
}

fn greedy_cuts(prefix: &[u64], n: usize) -> Vec<usize> {
    let len = prefix.len() - 1;
    let total = prefix[len];
    let mut cuts = Vec::new();
    let mut k = 1u64;
    for (j, &p) in prefix.iter().enumerate().take(len).skip(1) {
        if k < n as u64 && p * n as u64 >= k * total {
            cuts.push(j);
            while k < n as u64 && p * n as u64 >= k * total {
                k += 1;
            }
        }
    }
    cuts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entries_from_sizes(sizes: &[u64]) -> Vec<Entry> {
        let mut out = Vec::new();
        for (r, &s) in sizes.iter().enumerate() {
            for c in 0..s {
                out.push(Entry::new(
                    (r as u32).to_be_bytes(),
                    (c as u32).to_be_bytes(),
                    [1],
                ));
            }
        }
        out
    }

    fn tablet_sizes(entries: &[Entry], splits: &SplitPoints) -> Vec<u64> {
        let mut sizes = vec![0u64; splits.n_tablets()];
        for e in entries {
            sizes[splits.tablet_for(e.row())] += 1;
        }
        sizes
    }

    #[test]
    fn routing_is_end_inclusive() {
        let s = SplitPoints::new([[2u8], [5u8]]).unwrap();
        assert_eq!(s.tablet_for(&[0]), 0);
        assert_eq!(s.tablet_for(&[2]), 0);
        assert_eq!(s.tablet_for(&[3]), 1);
        assert_eq!(s.tablet_for(&[5]), 1);
        assert_eq!(s.tablet_for(&[6]), 2);
        assert!(s.tablet_range(1).contains(&[3]));
        assert!(!s.tablet_range(1).contains(&[2]));
    }

    #[test]
    fn rejects_unsorted_boundaries() {
        assert!(SplitPoints::new([[3u8], [3u8]]).is_err());
        assert!(SplitPoints::new([[4u8], [3u8]]).is_err());
    }

    #[test]
    fn one_tablet_means_no_boundaries() {
        let e = entries_from_sizes(&[3, 2, 1]);
        assert!(compute_equal_splits(&e, 1).unwrap().boundaries().is_empty());
        assert!(matches!(
            compute_equal_splits(&e, 0),
            Err(EngineError::InvalidTabletCount(0))
        ));
    }

    #[test]
    fn four_unit_rows_split_after_second() {
        let e = entries_from_sizes(&[1, 1, 1, 1]);
        let s = compute_equal_splits(&e, 2).unwrap();
        assert_eq!(s.boundaries(), &[Bytes::from_slice(&1u32.to_be_bytes())]);
    }

    #[test]
    fn k6_upper_triangle_three_tablets() {
        // row degrees 5,4,3,2,1 (the last vertex has no upper entries)
        let e = entries_from_sizes(&[5, 4, 3, 2, 1]);
        let s = compute_equal_splits(&e, 3).unwrap();
        let sizes = tablet_sizes(&e, &s);
        assert_eq!(sizes.iter().sum::<u64>(), 15);
        assert!(sizes.len() <= 3);
        for &t in &sizes {
            assert!(t.abs_diff(5) <= 5, "{sizes:?}");
        }
    }

    #[test]
    fn intersect_ranges() {
        let a = RowRange::closed([1], [5]);
        let b = RowRange::closed([3], [9]);
        assert_eq!(a.intersect(&b), Some(RowRange::closed([3], [5])));
        assert_eq!(
            RowRange::closed([1], [2]).intersect(&RowRange::closed([3], [4])),
            None
        );
        let s = SplitPoints::new([[2u8]]).unwrap();
        assert_eq!(
            s.tablet_range(1).intersect(&RowRange::closed([0], [2])),
            None
        );
    }

    fn exists_balanced(sizes: &[u64], n: usize) -> bool {
        let len = sizes.len();
        let total: u64 = sizes.iter().sum();
        let m = *sizes.iter().max().unwrap();
        // all subsets of the len-1 cut positions
        (0u32..1 << (len - 1)).any(|mask| {
            let mut parts = Vec::new();
            let mut acc = 0;
            for (i, s) in sizes.iter().enumerate() {
                acc += s;
                if i == len - 1 || mask & (1 << i) != 0 {
                    parts.push(acc);
                    acc = 0;
                }
            }
            parts.len() <= n
                && parts.iter().max().unwrap() - parts.iter().min().unwrap() <= m
                && parts
                    .iter()
                    .all(|&p| (p * n as u64).abs_diff(total) <= n as u64 * m)
        })
    }

    proptest! {
        #[test]
        fn split_balance(sizes in prop::collection::vec(1u64..12, 1..10), n in 1usize..6) {
            let e = entries_from_sizes(&sizes);
            let s = compute_equal_splits(&e, n).unwrap();
            let t = tablet_sizes(&e, &s);
            let m = *sizes.iter().max().unwrap();
            let total: u64 = sizes.iter().sum();
            prop_assert!(t.len() <= n);
            prop_assert!(t.iter().all(|&x| x > 0));
            // brute force says a balanced partition exists; ours must be one
            prop_assert!(exists_balanced(&sizes, n));
            prop_assert!(t.iter().max().unwrap() - t.iter().min().unwrap() <= m, "{:?} {:?}", sizes, t);
            prop_assert!(t.iter().all(|&x| (x * n as u64).abs_diff(total) <= n as u64 * m));
        }

        #[test]
        fn split_balance_large(sizes in prop::collection::vec(1u64..200, 1..300), n in 1usize..30) {
            let e = entries_from_sizes(&sizes);
            let s = compute_equal_splits(&e, n).unwrap();
            let t = tablet_sizes(&e, &s);
            let m = *sizes.iter().max().unwrap();
            prop_assert!(t.len() <= n);
            prop_assert!(t.iter().max().unwrap() - t.iter().min().unwrap() <= m);
        }
    }
}
