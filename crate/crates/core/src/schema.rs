//! Graph-to-table schemas.
//!
//! Vertices become row and column qualifier bytes. The default codec is a
//! fixed 4-byte big-endian word, so byte order equals numeric order; every
//! "upper triangle" test downstream is a raw byte comparison and depends on
//! that. An ASCII decimal codec is available to study how a different vertex
//! order shifts work between rows.

use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::kvengine::{
    compute_equal_splits, encode_u64, Bytes, CombinerStack, Engine, EngineError, Entry, Key, Table,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("vertex encoding must be 4 bytes, got {0}")]
    VertexLength(usize),
    #[error("not a decimal vertex label: {0:?}")]
    BadDecimal(Vec<u8>),
    #[error("self-edge on vertex {0}")]
    SelfEdge(u32),
    #[error("malformed edge label {0:?}")]
    BadEdgeLabel(Vec<u8>),
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

pub fn encode_vertex(v: u32) -> [u8; 4] {
    v.to_be_bytes()
}

pub fn decode_vertex(bytes: &[u8]) -> Result<u32, CodecError> {
    let arr: [u8; 4] = bytes
        .try_into()
        .map_err(|_| CodecError::VertexLength(bytes.len()))?;
    Ok(u32::from_be_bytes(arr))
}

/// Fixed-width edge label: the two endpoints in ascending order.
pub fn encode_edge(u: u32, w: u32) -> Result<[u8; 8], CodecError> {
    if u == w {
        return Err(CodecError::SelfEdge(u));
    }
    let (lo, hi) = (u.min(w), u.max(w));
    let mut out = [0u8; 8];
    out[..4].copy_from_slice(&lo.to_be_bytes());
    out[4..].copy_from_slice(&hi.to_be_bytes());
    Ok(out)
}

pub fn decode_edge(bytes: &[u8]) -> Result<(u32, u32), CodecError> {
    if bytes.len() != 8 {
        return Err(CodecError::BadEdgeLabel(bytes.to_vec()));
    }
    Ok((decode_vertex(&bytes[..4])?, decode_vertex(&bytes[4..])?))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum VertexEncoding {
    #[default]
    FixedWidth,
    /// ASCII decimal. Byte order is string order (e.g. "10" < "9"); edge
    /// labels join the endpoints with `,`, which sorts below every digit.
    DecimalString,
}

const LABEL_SEP: u8 = b',';

impl VertexEncoding {
    pub fn encode(self, v: u32) -> Bytes {
        match self {
            VertexEncoding::FixedWidth => Bytes::from_slice(&v.to_be_bytes()),
            VertexEncoding::DecimalString => Bytes::from_slice(v.to_string().as_bytes()),
        }
    }

    pub fn decode(self, bytes: &[u8]) -> Result<u32, CodecError> {
        match self {
            VertexEncoding::FixedWidth => decode_vertex(bytes),
            VertexEncoding::DecimalString => {
                let bad = || CodecError::BadDecimal(bytes.to_vec());
                let s = std::str::from_utf8(bytes).map_err(|_| bad())?;
                // reject forms that would not round-trip ("007", "+7")
                if s.is_empty()
                    || (s.len() > 1 && s.starts_with('0'))
                    || !s.bytes().all(|b| b.is_ascii_digit())
                {
                    return Err(bad());
                }
                s.parse().map_err(|_| bad())
            }
        }
    }

    /// Endpoints ordered by encoded bytes: `(lower, higher)`.
    pub fn orient(self, u: u32, w: u32) -> (u32, u32) {
        match self {
            VertexEncoding::FixedWidth => (u.min(w), u.max(w)),
            VertexEncoding::DecimalString => {
                if self.encode(u) <= self.encode(w) {
                    (u, w)
                } else {
                    (w, u)
                }
            }
        }
    }

    /// Edge label with endpoints in ascending byte order.
    pub fn edge_label(self, u: u32, w: u32) -> Result<Bytes, CodecError> {
        if u == w {
            return Err(CodecError::SelfEdge(u));
        }
        let (lo, hi) = self.orient(u, w);
        let mut out = self.encode(lo);
        if self == VertexEncoding::DecimalString {
            out.push(LABEL_SEP);
        }
        out.extend_from_slice(&self.encode(hi));
        Ok(out)
    }

    /// Splits an edge label into its encoded endpoints.
    pub fn split_edge_label(self, label: &[u8]) -> Result<(&[u8], &[u8]), CodecError> {
        let bad = || CodecError::BadEdgeLabel(label.to_vec());
        match self {
            VertexEncoding::FixedWidth if label.len() == 8 => Ok(label.split_at(4)),
            VertexEncoding::FixedWidth => Err(bad()),
            VertexEncoding::DecimalString => {
                let i = label.iter().position(|&b| b == LABEL_SEP).ok_or_else(bad)?;
                Ok((&label[..i], &label[i + 1..]))
            }
        }
    }

    pub fn decode_edge_label(self, label: &[u8]) -> Result<(u32, u32), CodecError> {
        let (a, b) = self.split_edge_label(label)?;
        Ok((self.decode(a)?, self.decode(b)?))
    }
}

impl FromStr for VertexEncoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" | "fixed-width" => Ok(VertexEncoding::FixedWidth),
            "decimal" | "decimal-string" => Ok(VertexEncoding::DecimalString),
            other => Err(format!(
                "unknown encoding `{other}` (fixed-width | decimal-string)"
            )),
        }
    }
}

/// Undirected simple graph: sorted, deduplicated pairs `(u, w)` with `u < w`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgeList {
    n_vertices: usize,
    edges: Vec<(u32, u32)>,
}

impl EdgeList {
    /// Normalises arbitrary pairs: self-loops dropped, each pair unordered,
    /// duplicates removed. `n_vertices` grows to cover every endpoint.
    pub fn new(n_vertices: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut edges: Vec<(u32, u32)> = pairs
            .into_iter()
            .filter(|(u, w)| u != w)
            .map(|(u, w)| (u.min(w), u.max(w)))
            .collect();
        edges.par_sort_unstable();
        edges.dedup();
        let needed = edges
            .iter()
            .map(|&(_, w)| w as usize + 1)
            .max()
            .unwrap_or(0);
        EdgeList {
            n_vertices: n_vertices.max(needed),
            edges,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        EdgeList::new(0, pairs)
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn nedges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn degrees(&self) -> Vec<u64> {
        let mut d = vec![0u64; self.n_vertices];
        for &(u, w) in &self.edges {
            d[u as usize] += 1;
            d[w as usize] += 1;
        }
        d
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BuildOptions {
    pub n_tablets: usize,
    pub encoding: VertexEncoding,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            n_tablets: 24,
            encoding: VertexEncoding::FixedWidth,
        }
    }
}

/// One entry `(u, w, 1)` per edge, with `u` below `w` in byte order.
pub fn build_upper_adjacency(
    engine: &Engine,
    name: &str,
    g: &EdgeList,
    opts: BuildOptions,
) -> Result<Arc<Table>, SchemaError> {
    let enc = opts.encoding;
    let one = encode_u64(1);
    let entries = g
        .edges()
        .par_iter()
        .map(|&(u, w)| {
            let (lo, hi) = enc.orient(u, w);
            Entry {
                key: Key::new(enc.encode(lo), enc.encode(hi)),
                value: one.clone(),
            }
        })
        .collect();
    load_table(engine, name, entries, opts.n_tablets)
}

/// Mirror of [`build_upper_adjacency`]: `(w, u, 1)` per edge.
pub fn build_lower_adjacency(
    engine: &Engine,
    name: &str,
    g: &EdgeList,
    opts: BuildOptions,
) -> Result<Arc<Table>, SchemaError> {
    let enc = opts.encoding;
    let one = encode_u64(1);
    let entries = g
        .edges()
        .par_iter()
        .map(|&(u, w)| {
            let (lo, hi) = enc.orient(u, w);
            Entry {
                key: Key::new(enc.encode(hi), enc.encode(lo)),
                value: one.clone(),
            }
        })
        .collect();
    load_table(engine, name, entries, opts.n_tablets)
}

/// Vertex-by-edge table: each edge label column holds exactly two entries,
/// one under each endpoint's row.
pub fn build_incidence(
    engine: &Engine,
    name: &str,
    g: &EdgeList,
    opts: BuildOptions,
) -> Result<Arc<Table>, SchemaError> {
    let enc = opts.encoding;
    let one = encode_u64(1);
    let entries = g
        .edges()
        .par_iter()
        .map(|&(u, w)| -> Result<[Entry; 2], CodecError> {
            let label = enc.edge_label(u, w)?;
            Ok([u, w].map(|v| Entry {
                key: Key::new(enc.encode(v), &label),
                value: one.clone(),
            }))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    load_table(engine, name, entries, opts.n_tablets)
}

fn load_table(
    engine: &Engine,
    name: &str,
    mut entries: Vec<Entry>,
    n_tablets: usize,
) -> Result<Arc<Table>, SchemaError> {
    engine.install(|| {
        entries.par_sort_unstable_by(|a, b| a.key.cmp(&b.key));
        let splits = compute_equal_splits(&entries, n_tablets)?;
        let table = engine.create_table(name, splits, CombinerStack::summing())?;
        table.put_batch(entries)?;
        table.compact()?;
        Ok(table)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kvengine::RowRange;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn k3() -> EdgeList {
        EdgeList::from_pairs([(1, 2), (2, 3), (1, 3)])
    }

    fn triples(t: &Table) -> Vec<(u32, u32, u64)> {
        t.scan_all()
            .map(|e| {
                (
                    decode_vertex(e.row()).unwrap(),
                    decode_vertex(e.colq()).unwrap(),
                    e.numeric().unwrap(),
                )
            })
            .collect()
    }

    #[test]
    fn vertex_codec() {
        assert_eq!(encode_vertex(0), [0, 0, 0, 0]);
        assert_eq!(encode_vertex(1), [0, 0, 0, 1]);
        assert_eq!(decode_vertex(&[0, 0, 1, 0]), Ok(256));
        assert_eq!(decode_vertex(&[0, 1]), Err(CodecError::VertexLength(2)));
    }

    #[test]
    fn edge_codec() {
        let mut expect = [0u8; 8];
        expect[3] = 1;
        expect[7] = 3;
        assert_eq!(encode_edge(3, 1), Ok(expect));
        assert_eq!(encode_edge(1, 3), Ok(expect));
        assert_eq!(encode_edge(5, 5), Err(CodecError::SelfEdge(5)));
        assert_eq!(decode_edge(&expect), Ok((1, 3)));
    }

    #[test]
    fn decimal_codec() {
        let enc = VertexEncoding::DecimalString;
        assert_eq!(enc.encode(42).as_slice(), b"42");
        assert_eq!(enc.decode(b"42"), Ok(42));
        assert!(enc.decode(b"042").is_err());
        assert!(enc.decode(b"").is_err());
        assert_eq!(enc.orient(9, 10), (10, 9));
        let label = enc.edge_label(9, 10).unwrap();
        assert_eq!(label.as_slice(), b"10,9");
        assert_eq!(enc.decode_edge_label(&label), Ok((10, 9)));
        // label order follows first endpoint's string order
        assert!(enc.edge_label(1, 5).unwrap() < enc.edge_label(12, 3).unwrap());
    }

    proptest! {
        #[test]
        fn vertex_order_embedding(a: u32, b: u32) {
            prop_assert_eq!(decode_vertex(&encode_vertex(a)).unwrap(), a);
            prop_assert_eq!(a.cmp(&b), encode_vertex(a).cmp(&encode_vertex(b)));
        }

        #[test]
        fn decimal_round_trip(a: u32, b: u32) {
            let enc = VertexEncoding::DecimalString;
            prop_assert_eq!(enc.decode(&enc.encode(a)).unwrap(), a);
            if a != b {
                let (lo, hi) = enc.decode_edge_label(&enc.edge_label(a, b).unwrap()).unwrap();
                prop_assert!(enc.encode(lo) < enc.encode(hi));
                prop_assert_eq!((lo.min(hi), lo.max(hi)), (a.min(b), a.max(b)));
            }
        }

        #[test]
        fn incidence_columns_have_two_entries(pairs in prop::collection::vec((0u32..30, 0u32..30), 0..80)) {
            let g = EdgeList::from_pairs(pairs);
            let engine = Engine::in_memory();
            let opts = BuildOptions { n_tablets: 4, ..Default::default() };
            let e = build_incidence(&engine, "e", &g, opts).unwrap();
            let up = build_upper_adjacency(&engine, "u", &g, opts).unwrap();
            let lo = build_lower_adjacency(&engine, "l", &g, opts).unwrap();
            let mut cols: HashMap<Vec<u8>, Vec<u32>> = HashMap::new();
            for ent in e.scan_all() {
                cols.entry(ent.colq().to_vec()).or_default().push(decode_vertex(ent.row()).unwrap());
            }
            prop_assert_eq!(cols.len(), g.nedges());
            for (label, rows) in cols {
                let (a, b) = decode_edge(&label).unwrap();
                prop_assert!(a < b);
                prop_assert_eq!(rows, vec![a, b]);
            }
            prop_assert_eq!(up.scan_all().count(), g.nedges());
            prop_assert_eq!(lo.scan_all().count(), g.nedges());
        }
    }

    #[test]
    fn upper_adjacency_k3() {
        let e = Engine::in_memory();
        let t = build_upper_adjacency(&e, "a", &k3(), BuildOptions::default()).unwrap();
        assert_eq!(triples(&t), vec![(1, 2, 1), (1, 3, 1), (2, 3, 1)]);
        // compacted: no buffered entries, at most one run per tablet
        assert!(t
            .tablet_stats()
            .iter()
            .all(|s| s.buffered_entries == 0 && s.runs <= 1));
    }

    #[test]
    fn upper_adjacency_path_and_empty() {
        let e = Engine::in_memory();
        let path = EdgeList::from_pairs([(1, 2), (2, 3)]);
        let t = build_upper_adjacency(&e, "p", &path, BuildOptions::default()).unwrap();
        assert_eq!(triples(&t), vec![(1, 2, 1), (2, 3, 1)]);
        let t =
            build_upper_adjacency(&e, "z", &EdgeList::default(), BuildOptions::default()).unwrap();
        assert_eq!(t.scan_all().count(), 0);
    }

    #[test]
    fn lower_adjacency_fixtures() {
        let e = Engine::in_memory();
        let t = build_lower_adjacency(&e, "k3", &k3(), BuildOptions::default()).unwrap();
        assert_eq!(triples(&t), vec![(2, 1, 1), (3, 1, 1), (3, 2, 1)]);
        let star = EdgeList::from_pairs([(1, 2), (1, 3), (1, 4)]);
        let t = build_lower_adjacency(&e, "star", &star, BuildOptions::default()).unwrap();
        assert_eq!(triples(&t), vec![(2, 1, 1), (3, 1, 1), (4, 1, 1)]);
        let t =
            build_lower_adjacency(&e, "z", &EdgeList::default(), BuildOptions::default()).unwrap();
        assert_eq!(t.scan_all().count(), 0);
    }

    #[test]
    fn incidence_single_edge_and_k3() {
        let e = Engine::in_memory();
        let t = build_incidence(
            &e,
            "e1",
            &EdgeList::from_pairs([(1, 2)]),
            BuildOptions::default(),
        )
        .unwrap();
        let got: Vec<_> = t
            .scan_all()
            .map(|x| {
                (
                    decode_vertex(x.row()).unwrap(),
                    decode_edge(x.colq()).unwrap(),
                    x.numeric(),
                )
            })
            .collect();
        assert_eq!(got, vec![(1, (1, 2), Some(1)), (2, (1, 2), Some(1))]);
        let t = build_incidence(&e, "e3", &k3(), BuildOptions::default()).unwrap();
        assert_eq!(t.scan_all().count(), 6);
    }

    #[test]
    fn builders_use_equal_splits() {
        let e = Engine::in_memory();
        let g = EdgeList::from_pairs((0..40u32).flat_map(|u| (u + 1..40).map(move |w| (u, w))));
        let t = build_upper_adjacency(
            &e,
            "k40",
            &g,
            BuildOptions {
                n_tablets: 6,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(t.n_tablets() > 1 && t.n_tablets() <= 6);
        let loads: Vec<usize> = t.tablet_stats().iter().map(|s| s.stored_entries).collect();
        assert_eq!(loads.iter().sum::<usize>(), g.nedges());
        assert!(loads.iter().max().unwrap() - loads.iter().min().unwrap() <= 39);
        assert_eq!(t.scan(RowRange::row(encode_vertex(0))).count(), 39);
    }

    #[test]
    fn decimal_upper_orientation() {
        let e = Engine::in_memory();
        let g = EdgeList::from_pairs([(9, 10), (1, 2)]);
        let opts = BuildOptions {
            encoding: VertexEncoding::DecimalString,
            ..Default::default()
        };
        let t = build_upper_adjacency(&e, "d", &g, opts).unwrap();
        let got: Vec<(Vec<u8>, Vec<u8>)> = t
            .scan_all()
            .map(|x| (x.row().to_vec(), x.colq().to_vec()))
            .collect();
        assert_eq!(
            got,
            vec![
                (b"1".to_vec(), b"2".to_vec()),
                (b"10".to_vec(), b"9".to_vec())
            ]
        );
    }

    #[test]
    fn edge_list_normalises() {
        let g = EdgeList::from_pairs([(1, 2), (2, 1), (1, 1)]);
        assert_eq!(g.edges(), &[(1, 2)]);
        assert_eq!(g.n_vertices(), 3);
        assert_eq!(g.degrees(), vec![0, 1, 1]);
        assert_eq!(EdgeList::new(10, []).n_vertices(), 10);
    }
}
