//! Plain-text memory snapshots.
//!
//! ```text
//! memtrack-memory v1 dimension=<d> capacity=<C> next_id=<id> next_key=<key>
//! <item_key> <identity> <eligibility> <age> <x_1> ... <x_d>
//! ```
//!
//! One whitespace-separated record per item, ordered by item key. Reals are
//! written in shortest round-trip form, so a reread store is bit-identical.

use std::io::{BufRead, Write};

use super::{IdentityId, ItemKey, MemoryItem, MemoryStore, StoreConfig};
use crate::error::{Error, Result};

const MAGIC: &str = "memtrack-memory";
const VERSION: &str = "v1";

pub fn write_snapshot<W: Write>(store: &MemoryStore, mut out: W) -> Result<()> {
    writeln!(
        out,
        "{MAGIC} {VERSION} dimension={} capacity={} next_id={} next_key={}",
        store.dimension(),
        store.capacity(),
        store.next_id(),
        store.next_key()
    )?;
    let mut line = String::new();
    for item in store.items() {
        use std::fmt::Write as _;
        line.clear();
        let _ = write!(
            line,
            "{} {} {:?} {}",
            item.key, item.identity, item.eligibility, item.age
        );
        for c in &item.descriptor {
            let _ = write!(line, " {c:?}");
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a snapshot. The removal threshold and normalization policy are
/// engine settings and are not part of the file.
pub fn read_snapshot<R: BufRead>(input: R, e_bar: f64, normalize: bool) -> Result<MemoryStore> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing snapshot header"))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != MAGIC || fields[1] != VERSION {
        return Err(Error::parse(1, format!("bad snapshot header `{header}`")));
    }
    let header_value = |name: &str, field: &str| -> Result<u64> {
        field
            .strip_prefix(name)
            .and_then(|rest| rest.strip_prefix('='))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(1, format!("expected `{name}=<integer>`, got `{field}`")))
    };
    let dimension = header_value("dimension", fields[2])? as usize;
    let capacity = header_value("capacity", fields[3])? as usize;
    let next_id = header_value("next_id", fields[4])?;
    let next_key = header_value("next_key", fields[5])?;

    let mut items = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 4 + dimension {
            return Err(Error::Dimension {
                expected: dimension,
                found: tok.len().saturating_sub(4),
            });
        }
        let int = |s: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::parse(lineno, format!("expected integer, got `{s}`")))
        };
        let real = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(lineno, format!("expected real, got `{s}`")))
        };
        items.push(MemoryItem {
            key: ItemKey(int(tok[0])?),
            identity: IdentityId(int(tok[1])?),
            eligibility: real(tok[2])?,
            age: int(tok[3])?,
            descriptor: tok[4..].iter().map(|s| real(s)).collect::<Result<_>>()?,
        });
    }
    let config = StoreConfig {
        dimension,
        capacity,
        e_bar,
        normalize,
    };
    MemoryStore::from_parts(config, items, next_id, next_key)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MemoryStore {
        let mut s = MemoryStore::new(StoreConfig {
            dimension: 2,
            capacity: 8,
            e_bar: 0.5,
            normalize: true,
        })
        .unwrap();
        let a = s.insert(&[0.3, 0.7], IdentityId(0)).unwrap().key;
        s.insert(&[1.0, -2.0], IdentityId(1)).unwrap();
        s.insert(&[1e-7, 1.0], IdentityId(1)).unwrap();
        s.decay_and_touch(&[(a, 0.988_435_876_378_191_9)]).unwrap();
        s.age_unmatched(&[a].into_iter().collect());
        s.remove(ItemKey(1));
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let s = sample();
        let mut buf = Vec::new();
        write_snapshot(&s, &mut buf).unwrap();
        let back = read_snapshot(buf.as_slice(), 0.5, true).unwrap();
        assert_eq!(back.items(), s.items());
        assert_eq!(back.next_id(), s.next_id());
        assert_eq!(back.next_key(), s.next_key());
        assert_eq!(back.capacity(), 8);

        let mut again = Vec::new();
        write_snapshot(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_snapshot(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "memtrack-memory v1 dimension=2 capacity=8 next_id=2 next_key=3"
        );
        assert!(lines.next().unwrap().starts_with("0 0 0.98843587637819"));
    }

    #[test]
    fn rejects_malformed_input() {
        let bad_header = "memtrack-memory v2 dimension=2 capacity=8 next_id=0 next_key=0\n";
        assert!(matches!(
            read_snapshot(bad_header.as_bytes(), 0.5, true),
            Err(Error::Parse { line: 1, .. })
        ));
        let short = "memtrack-memory v1 dimension=2 capacity=8 next_id=1 next_key=1\n0 0 1 0 0.5\n";
        assert!(matches!(
            read_snapshot(short.as_bytes(), 0.5, true),
            Err(Error::Dimension { expected: 2, found: 1 })
        ));
        let garbage = "memtrack-memory v1 dimension=1 capacity=8 next_id=1 next_key=1\n0 0 x 0 0.5\n";
        assert!(matches!(
            read_snapshot(garbage.as_bytes(), 0.5, true),
            Err(Error::Parse { line: 2, .. })
        ));
        let stale = "memtrack-memory v1 dimension=1 capacity=8 next_id=1 next_key=1\n3 0 1 0 0.5\n";
        assert!(matches!(
            read_snapshot(stale.as_bytes(), 0.5, true),
            Err(Error::Schema(_))
        ));
    }
}
