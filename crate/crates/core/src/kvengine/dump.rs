use std::io::{self, Write};

use super::Table;

/// Writes `row\tcolq\tvalue` lines for a full scan. Fields made only of
/// printable ASCII other than tab and backslash are written verbatim; any
/// other non-empty field is written as `0x` followed by lowercase hex.
pub fn dump_tsv<W: Write>(table: &Table, mut out: W) -> io::Result<()> {
    for e in table.scan_all() {
        writeln!(
            out,
            "{}\t{}\t{}",
            field(e.row()),
            field(e.colq()),
            field(&e.value)
        )?;
    }
    out.flush()
}

fn field(bytes: &[u8]) -> String {
    let printable = bytes
        .iter()
        .all(|&b| (0x20..0x7f).contains(&b) && b != b'\\')
        && !bytes.starts_with(b"0x");
    if printable {
        String::from_utf8(bytes.to_vec()).expect("ascii")
    } else {
        let mut s = String::with_capacity(2 + 2 * bytes.len());
        s.push_str("0x");
        for b in bytes {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }
}
