use std::collections::HashMap;

use crate::kvengine::{Bytes, Table};
use crate::schema::VertexEncoding;

use super::TriCountError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Triangle {
    /// Every entry has `row < colq`.
    Upper,
    /// Every entry has `row > colq`.
    Lower,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Checks a 0/1 adjacency table: no diagonal, strictly on one side of it,
/// every value exactly 1.
pub fn validate_adjacency(table: &Table, side: Triangle) -> Result<(), TriCountError> {
    for e in table.scan_all() {
        let at = || format!("({}, {})", hex(e.row()), hex(e.colq()));
        if e.row() == e.colq() {
            return Err(TriCountError::Diagonal(at()));
        }
        let ok = match side {
            Triangle::Upper => e.row() < e.colq(),
            Triangle::Lower => e.row() > e.colq(),
        };
        if !ok {
            return Err(TriCountError::WrongTriangle(at(), side));
        }
        if e.numeric() != Some(1) {
            return Err(TriCountError::NotUnit(at()));
        }
    }
    Ok(())
}

/// Checks an incidence table: each edge column holds exactly two unit
/// entries, under the two endpoints its label names, in ascending order.
pub fn validate_incidence(table: &Table, encoding: VertexEncoding) -> Result<(), TriCountError> {
    let mut columns: HashMap<Bytes, Vec<Bytes>> = HashMap::new();
    for e in table.scan_all() {
        if e.numeric() != Some(1) {
            return Err(TriCountError::NotUnit(format!(
                "({}, {})",
                hex(e.row()),
                hex(e.colq())
            )));
        }
        columns
            .entry(Bytes::from_slice(e.colq()))
            .or_default()
            .push(Bytes::from_slice(e.row()));
    }
    for (label, rows) in columns {
        if rows.len() != 2 {
            return Err(TriCountError::IncidenceCardinality(hex(&label), rows.len()));
        }
        let bad = || TriCountError::BadEdgeLabel(hex(&label));
        let (lo, hi) = encoding.split_edge_label(&label).map_err(|_| bad())?;
        encoding.decode(lo).map_err(|_| bad())?;
        encoding.decode(hi).map_err(|_| bad())?;
        // scan order puts rows ascending
        if lo >= hi || rows[0][..] != *lo || rows[1][..] != *hi {
            return Err(bad());
        }
    }
    Ok(())
}
