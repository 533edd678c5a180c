use std::cmp::Ordering;
use std::fmt;

use smallvec::SmallVec;

/// Byte string with inline storage for the short keys and values used by
/// the graph schemas (4-byte vertices, 8-byte edge labels, 8-byte counts).
pub type Bytes = SmallVec<[u8; 16]>;

/// Row plus column qualifier. Ordered lexicographically on row, then colq.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key {
    row: Bytes,
    colq: Bytes,
}

impl Key {
    pub fn new(row: impl AsRef<[u8]>, colq: impl AsRef<[u8]>) -> Self {
        Key {
            row: Bytes::from_slice(row.as_ref()),
            colq: Bytes::from_slice(colq.as_ref()),
        }
    }

    pub fn row(&self) -> &[u8] {
        &self.row
    }

    pub fn colq(&self) -> &[u8] {
        &self.colq
    }

    /// Heap footprint estimate used for buffer accounting.
    pub(crate) fn weight(&self) -> usize {
        self.row.len() + self.colq.len()
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", hex(&self.row), hex(&self.colq))
    }
}

/// A key-value record. An empty value is a real value, distinct from an
/// absent entry.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Entry {
    pub key: Key,
    pub value: Bytes,
}

impl Entry {
    pub fn new(row: impl AsRef<[u8]>, colq: impl AsRef<[u8]>, value: impl AsRef<[u8]>) -> Self {
        Entry {
            key: Key::new(row, colq),
            value: Bytes::from_slice(value.as_ref()),
        }
    }

    pub fn row(&self) -> &[u8] {
        self.key.row()
    }

    pub fn colq(&self) -> &[u8] {
        self.key.colq()
    }

    /// Decodes the value as a big-endian `u64`, if it is exactly 8 bytes.
    pub fn numeric(&self) -> Option<u64> {
        decode_u64(&self.value)
    }

    pub(crate) fn weight(&self) -> usize {
        self.key.weight() + self.value.len()
    }

    pub(crate) fn cmp_key(&self, other: &Entry) -> Ordering {
        self.key.cmp(&other.key)
    }
}

impl fmt::Debug for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.numeric() {
            Some(n) => write!(f, "{:?} -> {}", self.key, n),
            None if self.value.is_empty() => write!(f, "{:?} -> ''", self.key),
            None => write!(f, "{:?} -> {}", self.key, hex(&self.value)),
        }
    }
}

/// Integers live in values as fixed 8-byte big-endian words, so byte order
/// matches numeric order and no integer collides with the empty marker.
pub fn encode_u64(v: u64) -> Bytes {
    Bytes::from_slice(&v.to_be_bytes())
}

pub fn decode_u64(bytes: &[u8]) -> Option<u64> {
    let arr: [u8; 8] = bytes.try_into().ok()?;
    Some(u64::from_be_bytes(arr))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_orders_by_row_then_colq() {
        let a = Key::new([1], [9]);
        let b = Key::new([2], [0]);
        let c = Key::new([2], [1]);
        assert!(a < b && b < c);
        // shorter prefix sorts first
        assert!(Key::new([1], []) < Key::new([1], [0]));
        assert!(Key::new([1], [0xff]) < Key::new([1, 0], []));
    }

    #[test]
    fn u64_codec() {
        assert_eq!(encode_u64(2).as_slice(), &[0, 0, 0, 0, 0, 0, 0, 2]);
        assert_eq!(decode_u64(&encode_u64(u64::MAX)), Some(u64::MAX));
        assert_eq!(decode_u64(&[]), None);
        assert_eq!(decode_u64(&[1, 2, 3]), None);
    }

    #[test]
    fn empty_value_is_not_numeric() {
        let e = Entry::new([1], [2], []);
        assert_eq!(e.numeric(), None);
        assert!(e.value.is_empty());
    }
}
