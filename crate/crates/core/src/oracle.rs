//! Ground truth computed directly from an [`EdgeList`], sharing no code path
//! with the table pipelines. Byte orderings are rebuilt here from
//! `to_be_bytes` / `to_string` rather than taken from the schema codecs.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::kvengine::SplitPoints;
use crate::schema::{EdgeList, VertexEncoding};

/// Key bytes of a vertex under an encoding.
fn key_bytes(encoding: VertexEncoding, v: u32) -> Vec<u8> {
    match encoding {
        VertexEncoding::FixedWidth => v.to_be_bytes().to_vec(),
        VertexEncoding::DecimalString => v.to_string().into_bytes(),
    }
}

fn below(encoding: VertexEncoding, a: u32, b: u32) -> bool {
    key_bytes(encoding, a) < key_bytes(encoding, b)
}

/// Neighbours of each vertex that sort above it under `encoding`, ascending.
fn upper_neighbours(g: &EdgeList, encoding: VertexEncoding) -> Vec<Vec<u32>> {
    let mut up = vec![Vec::new(); g.n_vertices()];
    for &(u, w) in g.edges() {
        if below(encoding, u, w) {
            up[u as usize].push(w);
        } else {
            up[w as usize].push(u);
        }
    }
    for row in &mut up {
        row.sort_by_key(|&v| key_bytes(encoding, v));
    }
    up
}

/// Triangles by intersecting numerically sorted higher-neighbour lists of
/// each edge's endpoints, so each `u < v < w` is seen once.
pub fn brute_force_triangles(g: &EdgeList) -> u64 {
    let mut higher = vec![Vec::new(); g.n_vertices()];
    for &(u, w) in g.edges() {
        higher[u as usize].push(w);
    }
    let mut count = 0;
    for &(u, v) in g.edges() {
        let (a, b) = (&higher[u as usize], &higher[v as usize]);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    count += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
    }
    count
}

/// `sum((L·U) ∘ A) / 2` by sparse row-by-row products.
pub fn cohen_reference(g: &EdgeList) -> u64 {
    let n = g.n_vertices();
    let mut lower = vec![Vec::new(); n];
    let mut upper = vec![Vec::new(); n];
    let mut mask = HashSet::with_capacity(2 * g.nedges());
    for &(u, w) in g.edges() {
        lower[w as usize].push(u);
        upper[u as usize].push(w);
        mask.insert((u, w));
        mask.insert((w, u));
    }
    let mut total = 0u64;
    for (i, ks) in lower.iter().enumerate() {
        for &k in ks {
            for &j in &upper[k as usize] {
                if mask.contains(&(i as u32, j)) {
                    total += 1;
                }
            }
        }
    }
    total / 2
}

/// `Σ_r C(d_r, 2)` over rows of the upper adjacency under `encoding`.
pub fn nppf_oracle_adjacency(g: &EdgeList, encoding: VertexEncoding) -> u64 {
    upper_neighbours(g, encoding)
        .iter()
        .map(|r| {
            let d = r.len() as u64;
            d * d.saturating_sub(1) / 2
        })
        .sum()
}

/// Edge label endpoints, lower-sorting endpoint first.
fn label(encoding: VertexEncoding, u: u32, w: u32) -> (u32, u32) {
    if below(encoding, u, w) {
        (u, w)
    } else {
        (w, u)
    }
}

/// How many times each `(v1, [v2, v3])` key is written by the masked
/// adjacency-times-incidence product.
pub fn incidence_emission_counts(
    g: &EdgeList,
    encoding: VertexEncoding,
) -> HashMap<(u32, (u32, u32)), u32> {
    let mut neighbours = vec![Vec::new(); g.n_vertices()];
    for &(u, w) in g.edges() {
        neighbours[u as usize].push(w);
        neighbours[w as usize].push(u);
    }
    let mut counts = HashMap::new();
    for (v, nbrs) in neighbours.iter().enumerate() {
        let v = v as u32;
        for &v1 in nbrs.iter().filter(|&&x| below(encoding, x, v)) {
            for &x in nbrs {
                let (v2, v3) = label(encoding, v, x);
                if below(encoding, v1, v2) {
                    *counts.entry((v1, (v2, v3))).or_insert(0) += 1;
                }
            }
        }
    }
    counts
}

/// Number of `(v, v1) ∈ A_lower` by `(v, [v2, v3]) ∈ E` pairs with `v1 < v2`.
pub fn nppf_oracle_adj_incidence(g: &EdgeList, encoding: VertexEncoding) -> u64 {
    incidence_emission_counts(g, encoding)
        .values()
        .map(|&c| c as u64)
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkewReport {
    /// Vertex count per degree.
    pub degree_histogram: BTreeMap<u64, u64>,
    pub max_degree: u64,
    pub mean_degree: f64,
    /// Outer-product wedge count generated by each tablet's rows.
    pub per_tablet_load: Vec<u64>,
    /// Maximum over mean of `per_tablet_load`; 1 when there is no load.
    pub imbalance_ratio: f64,
}

/// Per-tablet `C(d_r, 2)` under `splits`, with rows holding more than
/// `threshold` upper entries left out (they go to the inner product).
pub fn skew_report(
    g: &EdgeList,
    splits: &SplitPoints,
    encoding: VertexEncoding,
    threshold: Option<u64>,
) -> SkewReport {
    let degrees = g.degrees();
    let mut degree_histogram = BTreeMap::new();
    for &d in &degrees {
        *degree_histogram.entry(d).or_insert(0) += 1;
    }
    let max_degree = degrees.iter().copied().max().unwrap_or(0);
    let mean_degree = if degrees.is_empty() {
        0.0
    } else {
        degrees.iter().sum::<u64>() as f64 / degrees.len() as f64
    };

    let mut per_tablet_load = vec![0u64; splits.n_tablets()];
    for (r, row) in upper_neighbours(g, encoding).iter().enumerate() {
        let d = row.len() as u64;
        if threshold.is_some_and(|t| d > t) {
            continue;
        }
        let tablet = splits.tablet_for(&key_bytes(encoding, r as u32));
        per_tablet_load[tablet] += d * d.saturating_sub(1) / 2;
    }
    let total: u64 = per_tablet_load.iter().sum();
    let imbalance_ratio = if total == 0 {
        1.0
    } else {
        let mean = total as f64 / per_tablet_load.len() as f64;
        *per_tablet_load.iter().max().expect("nonempty") as f64 / mean
    };
    SkewReport {
        degree_histogram,
        max_degree,
        mean_degree,
        per_tablet_load,
        imbalance_ratio,
    }
}
