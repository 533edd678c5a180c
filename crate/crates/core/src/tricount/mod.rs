//! Triangle counting pipelines over the table engine.
//!
//! * [`count_adjacency_only`]: `T = A + triu(AᵀA)` with every partial product
//!   doubled, then `Σ (v - 1) / 2` over odd entries of `T`.
//! * [`count_adj_incidence`]: `AᵀE` masked to `v1 < v2`; keys hit twice are
//!   triangles, detected by pair collapse and summed in place.
//! * [`count_hybrid`]: rows with more than `τ` entries go through a masked
//!   inner product, the rest through the adjacency-only outer product.
//!
//! All three count each triangle once, at its smallest vertex.

mod iterators;
mod validate;

use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::kvengine::{Bytes, Combiner, CombinerStack, Engine, EngineError, EntryStream, Table};
use crate::schema::VertexEncoding;
use crate::tablemult::{
    inner_product_masked_count, outer_table_mult, MultiplyStats, RowMultiply,
    RowMultiplyAdjIncidence, RowMultiplyAdjacency, SkipRows,
};

pub use iterators::{NumericSumIterator, PairCollapseIterator};
pub use validate::{validate_adjacency, validate_incidence, Triangle};

#[derive(Debug, Error)]
pub enum TriCountError {
    #[error("diagonal entry at {0}")]
    Diagonal(String),
    #[error("entry {0} is outside the {1:?} triangle")]
    WrongTriangle(String, Triangle),
    #[error("entry {0} does not hold the value 1")]
    NotUnit(String),
    #[error("incidence column {0} has {1} entries, expected 2")]
    IncidenceCardinality(String, usize),
    #[error("malformed or misfiled edge label {0}")]
    BadEdgeLabel(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleResult {
    pub triangles: u64,
    /// Partial products surviving the upper-triangle filter (plus, for the
    /// hybrid, nonzero inner-product terms).
    pub nppf: u64,
    /// Partial products formed before filtering.
    pub npp_total: u64,
    pub matmul_seconds: f64,
    pub reduce_seconds: f64,
    pub total_seconds: f64,
    /// Outer-product emissions per generating tablet.
    pub per_tablet_load: Vec<u64>,
}

/// `(v - 1) / 2` for odd `v`, nothing for even `v`.
pub fn odd_contribution(v: u64) -> u64 {
    if v % 2 == 1 {
        (v - 1) / 2
    } else {
        0
    }
}

/// The pair-collapse then numeric-sum stack carried by the incidence
/// product table.
pub fn incidence_stack() -> CombinerStack {
    CombinerStack::new(vec![
        Combiner::key_spanning(PairCollapseIterator),
        Combiner::key_spanning(NumericSumIterator),
    ])
}

/// Clones `a_upper` into a fresh table and adds the doubled wedge products
/// of `f` into it. The caller owns (and should drop) the returned table.
pub fn adjacency_partial_products(
    engine: &Engine,
    a_upper: &Table,
    f: &dyn RowMultiply,
) -> Result<(Arc<Table>, MultiplyStats), EngineError> {
    let t = engine.clone_table(a_upper.name(), &engine.fresh_name("T"))?;
    let stats = outer_table_mult(engine, a_upper, a_upper, f, &t)?;
    Ok((t, stats))
}

/// Writes `A_lowerᵀ E` (masked) into a fresh table with `e`'s splits and
/// the given stack.
pub fn incidence_partial_products(
    engine: &Engine,
    a_lower: &Table,
    e: &Table,
    encoding: VertexEncoding,
    stack: CombinerStack,
) -> Result<(Arc<Table>, MultiplyStats), EngineError> {
    let t = engine.create_table(&engine.fresh_name("T"), e.splits().clone(), stack)?;
    let f = RowMultiplyAdjIncidence { encoding };
    let stats = outer_table_mult(engine, a_lower, e, &f, &t)?;
    Ok((t, stats))
}

/// Per-tablet `Σ (v - 1) / 2` over odd values, summed at the caller.
pub fn odd_filter_reduce(engine: &Engine, t: &Table) -> u64 {
    reduce(engine, t, |s| {
        s.filter_map(|e| e.numeric()).map(odd_contribution).sum()
    })
}

/// Per-tablet sum of every numeric value, summed at the caller. Lone empty
/// entries contribute nothing.
pub fn numeric_sum_reduce(engine: &Engine, t: &Table) -> u64 {
    reduce(engine, t, |s| s.filter_map(|e| e.numeric()).sum())
}

fn reduce(engine: &Engine, t: &Table, f: impl Fn(EntryStream<'static>) -> u64 + Sync) -> u64 {
    engine
        .install(|| t.fold_tablets(|_, s| f(s)))
        .into_iter()
        .sum()
}

/// Entry count of every stored row.
pub fn row_degrees(engine: &Engine, t: &Table) -> Vec<(Bytes, u64)> {
    engine
        .install(|| {
            t.fold_tablets(|_, s| {
                let mut out: Vec<(Bytes, u64)> = Vec::new();
                for e in s {
                    match out.last_mut() {
                        Some((r, n)) if r[..] == *e.row() => *n += 1,
                        _ => out.push((Bytes::from_slice(e.row()), 1)),
                    }
                }
                out
            })
        })
        .into_iter()
        .flatten()
        .collect()
}

pub fn count_adjacency_only(
    engine: &Engine,
    a_upper: &Table,
) -> Result<TriangleResult, TriCountError> {
    validate_adjacency(a_upper, Triangle::Upper)?;
    outer_pipeline(engine, a_upper, &RowMultiplyAdjacency, None)
}

pub fn count_adj_incidence(
    engine: &Engine,
    a_lower: &Table,
    e: &Table,
    encoding: VertexEncoding,
) -> Result<TriangleResult, TriCountError> {
    validate_adjacency(a_lower, Triangle::Lower)?;
    validate_incidence(e, encoding)?;
    let start = Instant::now();
    let (t, stats) = incidence_partial_products(engine, a_lower, e, encoding, incidence_stack())?;
    let matmul = start.elapsed().as_secs_f64();
    let triangles = numeric_sum_reduce(engine, &t);
    engine.drop_table(t.name());
    let total = start.elapsed().as_secs_f64();
    Ok(result(triangles, stats, matmul, total))
}

/// `threshold = None` puts every row on the outer-product side.
pub fn count_hybrid(
    engine: &Engine,
    a_upper: &Table,
    threshold: Option<u64>,
) -> Result<TriangleResult, TriCountError> {
    validate_adjacency(a_upper, Triangle::Upper)?;
    let heavy: Vec<Bytes> = match threshold {
        None => Vec::new(),
        Some(tau) => row_degrees(engine, a_upper)
            .into_iter()
            .filter(|&(_, d)| d > tau)
            .map(|(r, _)| r)
            .collect(),
    };
    let f = SkipRows {
        inner: RowMultiplyAdjacency,
        skip: heavy.iter().cloned().collect(),
    };
    let inner_start = Instant::now();
    let inner = inner_product_masked_count(engine, a_upper, &heavy);
    let inner_seconds = inner_start.elapsed().as_secs_f64();

    let mut r = outer_pipeline(engine, a_upper, &f, Some(inner_seconds))?;
    r.triangles += inner.triangles;
    r.nppf += inner.nppf;
    r.npp_total += inner.nppf;
    Ok(r)
}

fn outer_pipeline(
    engine: &Engine,
    a_upper: &Table,
    f: &dyn RowMultiply,
    extra_matmul: Option<f64>,
) -> Result<TriangleResult, TriCountError> {
    let extra = extra_matmul.unwrap_or(0.0);
    let start = Instant::now();
    let (t, stats) = adjacency_partial_products(engine, a_upper, f)?;
    let matmul = start.elapsed().as_secs_f64();
    let triangles = odd_filter_reduce(engine, &t);
    engine.drop_table(t.name());
    let total = start.elapsed().as_secs_f64();
    Ok(result(triangles, stats, matmul + extra, total + extra))
}

fn result(triangles: u64, stats: MultiplyStats, matmul: f64, total: f64) -> TriangleResult {
    TriangleResult {
        triangles,
        nppf: stats.nppf,
        npp_total: stats.npp_total,
        matmul_seconds: matmul,
        reduce_seconds: total - matmul,
        total_seconds: total,
        per_tablet_load: stats.per_tablet_emitted,
    }
}
