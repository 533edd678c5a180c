//! Graph inputs: unpermuted RMAT/Kronecker graphs, TSV edge lists and small
//! canonical fixtures.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::schema::EdgeList;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid graph spec: {0}")]
    InvalidSpec(String),
    #[error("line {line}: malformed edge `{content}`")]
    Malformed { line: usize, content: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Standard Graph500 quadrant probabilities.
pub const GRAPH500_PROBS: [f64; 4] = [0.57, 0.19, 0.19, 0.05];

#[derive(Clone, Debug, PartialEq)]
pub struct GraphSpec {
    pub scale: u32,
    pub edge_factor: u32,
    /// Quadrant probabilities (a, b, c, d): top-left, top-right,
    /// bottom-left, bottom-right.
    pub probs: [f64; 4],
    pub seed: u64,
}

impl GraphSpec {
    pub fn new(scale: u32, edge_factor: u32, seed: u64) -> Self {
        GraphSpec {
            scale,
            edge_factor,
            probs: GRAPH500_PROBS,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if !(1..=31).contains(&self.scale) {
            return Err(GraphError::InvalidSpec(format!(
                "scale {} outside 1..=31",
                self.scale
            )));
        }
        if self.edge_factor < 1 {
            return Err(GraphError::InvalidSpec("edge factor must be >= 1".into()));
        }
        if self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(GraphError::InvalidSpec(format!(
                "probabilities {:?} out of range",
                self.probs
            )));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(GraphError::InvalidSpec(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        1usize << self.scale
    }

    pub fn n_raw_edges(&self) -> usize {
        self.edge_factor as usize * self.n_vertices()
    }
}

/// Directed RMAT pairs, `edge_factor * 2^scale` of them, without any vertex
/// permutation. Edge `i` draws from its own ChaCha stream `i` under the graph
/// seed, so the output is independent of thread count.
pub fn rmat_raw(spec: &GraphSpec) -> Result<Vec<(u32, u32)>, GraphError> {
    spec.validate()?;
    let [a, b, c, _] = spec.probs;
    let (ab, abc) = (a + b, a + b + c);
    let pairs = (0..spec.n_raw_edges() as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i);
            let (mut row, mut col) = (0u32, 0u32);
            for _ in 0..spec.scale {
                let u: f64 = rng.gen();
                let (rb, cb) = if u < a {
                    (0, 0)
                } else if u < ab {
                    (0, 1)
                } else if u < abc {
                    (1, 0)
                } else {
                    (1, 1)
                };
                row = (row << 1) | rb;
                col = (col << 1) | cb;
            }
            (row, col)
        })
        .collect();
    Ok(pairs)
}

/// `A + A^T`, diagonal removed, nonzeros set to 1.
pub fn symmetrize_simplify(
    n_vertices: usize,
    raw: impl IntoIterator<Item = (u32, u32)>,
) -> EdgeList {
    EdgeList::new(n_vertices, raw)
}

pub fn rmat_graph(spec: &GraphSpec) -> Result<EdgeList, GraphError> {
    Ok(symmetrize_simplify(spec.n_vertices(), rmat_raw(spec)?))
}

/// A parsed edge list. `labels[i]` is the original token for vertex `i`
/// when the input used non-integer vertex names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoadedGraph {
    pub graph: EdgeList,
    pub labels: Option<Vec<String>>,
}

const VERTICES_HEADER: &str = "# vertices\t";

/// Reads `u<TAB>w` lines. Blank lines and `#` comments are skipped. If every
/// token is an unsigned integer the tokens are used as vertex ids; otherwise
/// all tokens go through a dictionary in order of first appearance.
pub fn load_tsv(path: impl AsRef<Path>) -> Result<LoadedGraph, GraphError> {
    parse_tsv(BufReader::new(fs::File::open(path)?))
}

pub fn parse_tsv<R: BufRead>(reader: R) -> Result<LoadedGraph, GraphError> {
    let mut declared = 0usize;
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if let Some(n) = trimmed.strip_prefix(VERTICES_HEADER.trim_end()) {
            if let Ok(n) = n.trim().parse() {
                declared = n;
            }
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split(['\t', ' ']).filter(|f| !f.is_empty());
        match (fields.next(), fields.next(), fields.next()) {
            (Some(u), Some(w), None) => pairs.push((u.to_string(), w.to_string())),
            _ => {
                return Err(GraphError::Malformed {
                    line: i + 1,
                    content: line.clone(),
                })
            }
        }
    }

    let numeric: Option<Vec<(u32, u32)>> = pairs
        .iter()
        .map(|(u, w)| Some((u.parse().ok()?, w.parse().ok()?)))
        .collect();
    if let Some(ids) = numeric {
        return Ok(LoadedGraph {
            graph: EdgeList::new(declared, ids),
            labels: None,
        });
    }

    let mut index: HashMap<String, u32> = HashMap::new();
    let mut labels = Vec::new();
    let mut id = |tok: String| -> u32 {
        *index.entry(tok.clone()).or_insert_with(|| {
            labels.push(tok);
            (labels.len() - 1) as u32
        })
    };
    let ids: Vec<(u32, u32)> = pairs.into_iter().map(|(u, w)| (id(u), id(w))).collect();
    Ok(LoadedGraph {
        graph: EdgeList::new(labels.len(), ids),
        labels: Some(labels),
    })
}

pub fn save_tsv(g: &EdgeList, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_tsv(g, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_tsv<W: Write>(g: &EdgeList, mut w: W) -> io::Result<()> {
    writeln!(w, "{VERTICES_HEADER}{}", g.n_vertices())?;
    for &(u, v) in g.edges() {
        writeln!(w, "{u}\t{v}")?;
    }
    Ok(())
}

pub fn make_complete(n: u32) -> EdgeList {
    EdgeList::new(
        n as usize,
        (0..n).flat_map(|u| (u + 1..n).map(move |w| (u, w))),
    )
}

pub fn make_path(n: u32) -> EdgeList {
    EdgeList::new(n as usize, (1..n).map(|v| (v - 1, v)))
}

/// Vertex 0 joined to `1..n`.
pub fn make_star(n: u32) -> EdgeList {
    EdgeList::new(n as usize, (1..n).map(|v| (0, v)))
}

pub fn make_cycle(n: u32) -> EdgeList {
    let edges = if n >= 3 {
        (0..n).map(|v| (v, (v + 1) % n)).collect()
    } else {
        vec![]
    };
    EdgeList::new(n as usize, edges)
}

/// Complete binary tree on `n` vertices (heap layout).
pub fn make_binary_tree(n: u32) -> EdgeList {
    EdgeList::new(n as usize, (1..n).map(|v| ((v - 1) / 2, v)))
}

/// Circulant graph: each vertex joined to its `k` nearest successors.
/// Every vertex has degree `2k` when `n > 2k`.
pub fn make_ring(n: u32, k: u32) -> EdgeList {
    EdgeList::new(
        n as usize,
        (0..n).flat_map(|v| (1..=k).map(move |j| (v, (v + j) % n))),
    )
}

/// Erdős-Rényi `G(n, p)`.
pub fn make_gnp(n: u32, p: f64, seed: u64) -> EdgeList {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for w in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, w));
            }
        }
    }
    EdgeList::new(n as usize, edges)
}
