//! Text access traces, one access per line:
//!
//! ```text
//! # pimjoin trace v1: address kind cycle
//! 0x0 READ 0
//! 0x400000000 READ 49
//! ```
//!
//! The address is the linear byte address of [`Location::to_address`], the
//! kind is `READ` or `WRITE` and the cycle is the issue cycle. Lines starting
//! with `#` and blank lines are ignored.

use std::fmt::Write as _;

use pimjoin_core::trace::{AccessKind, AccessRecord};
use pimjoin_core::{Location, MemoryGeometry};

use crate::error::{AppError, AppResult};

pub const HEADER: &str = "# pimjoin trace v1: address kind cycle";

pub fn write_trace(records: &[AccessRecord], geometry: &MemoryGeometry) -> String {
    let mut out = String::with_capacity(32 * (records.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for rec in records {
        let kind = match rec.kind {
            AccessKind::Read => "READ",
            AccessKind::Write => "WRITE",
        };
        writeln!(out, "{:#x} {kind} {}", rec.loc.to_address(geometry), rec.cycle).unwrap();
    }
    out
}

pub fn parse_trace(text: &str, geometry: &MemoryGeometry) -> AppResult<Vec<AccessRecord>> {
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| AppError::Usage(format!("trace line {}: {what}: {line}", n + 1));
        let mut fields = line.split_whitespace();
        let (Some(addr), Some(kind), Some(cycle), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(bad("expected three fields"));
        };
        let addr = addr
            .strip_prefix("0x")
            .and_then(|h| u64::from_str_radix(h, 16).ok())
            .ok_or_else(|| bad("bad address"))?;
        let kind = match kind {
            "READ" => AccessKind::Read,
            "WRITE" => AccessKind::Write,
            _ => return Err(bad("kind must be READ or WRITE")),
        };
        let cycle = cycle.parse().map_err(|_| bad("bad cycle"))?;
        records.push(AccessRecord {
            kind,
            loc: Location::from_address(addr, geometry)?,
            cycle,
        });
    }
    Ok(records)
}
