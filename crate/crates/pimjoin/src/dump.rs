//! Versioned binary dump of built join structures.
//!
//! ```text
//! header   magic "PIMJDUMP" (8 bytes)
//!          version          u16
//!          geometry hash    u64
//!          section count    u32
//! table    per section: kind u32, offset u64, length u64
//! payload  sections at their offsets
//! ```
//!
//! All integers are little-endian and offsets count from the start of the
//! file. Section kinds are listed in [`Section`]. A reader skips kinds it
//! does not know; a dump is only loaded against a configuration with the
//! same geometry hash.

use pimjoin_core::mem::RankPosition;
use pimjoin_core::search::{BucketRow, EntryLayout};
use pimjoin_core::structures::{
    Dictionary, DuplicationList, FactLayout, PimHashTable, PimState, Placement, RankSlice,
};
use pimjoin_core::workload::WorkloadSpec;
use pimjoin_core::{Error, SimConfig};
use serde::{Deserialize, Serialize};

use crate::config::FlatConfig;
use crate::error::{AppError, AppResult};

pub const MAGIC: &[u8; 8] = b"PIMJDUMP";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 8 + 2 + 8 + 4;
const ENTRY_LEN: usize = 4 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Section {
    /// Resolved flat TOML config, UTF-8.
    Config = 1,
    /// [`DumpMeta`] as JSON.
    Meta = 2,
    /// code_bits u32, index_bits u32, bucket_capacity u32, count u64, then
    /// (value u64, code u64) pairs.
    Dictionary = 3,
    /// tag_bits, value_bits, entry_bits, capacity, index_bits (u32 each),
    /// row count u64, then per row: bucket id u32, word count u32, words u64.
    HashTable = 4,
    /// list count u64, then per list: length u32, row indices u32.
    Duplication = 5,
    /// placement tag u32 (0 replicated, 1 partitioned), buckets per rank
    /// u64, key_bits u32, keys_per_burst u64, bursts_per_row u64, fact_len
    /// u64, rank count u32, then per rank: index u32, channel u32, dimm u32,
    /// rank u32, key count u64, codes u64, fact indices u64.
    Fact = 6,
}

/// Provenance stored next to the structures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpMeta {
    pub workload: WorkloadSpec,
    pub workload_hash: u64,
    pub join: String,
    pub dim_rows: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dump {
    pub geometry_hash: u64,
    pub config: FlatConfig,
    pub meta: DumpMeta,
    pub state: PimState,
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> AppResult<&'a [u8]> {
        if self.buf.len() < n {
            return Err(AppError::Usage(format!("dump: {} section is truncated", self.what)));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> AppResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> AppResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Element count, refused when it could not fit the remaining bytes.
    fn count(&mut self, wide: bool, elem_bytes: usize) -> AppResult<usize> {
        let n = if wide { self.u64()? } else { u64::from(self.u32()?) } as usize;
        if n.saturating_mul(elem_bytes) > self.buf.len() {
            return Err(AppError::Usage(format!("dump: {} count {n} exceeds the data", self.what)));
        }
        Ok(n)
    }
}

fn encode_dictionary(d: &Dictionary) -> Vec<u8> {
    let mut w = Writer::default();
    w.u32(d.code_bits());
    w.u32(d.index_bits());
    w.u32(d.bucket_capacity());
    w.u64(d.len() as u64);
    for (value, code) in d.iter() {
        w.u64(value);
        w.u64(code);
    }
    w.0
}

fn decode_dictionary(mut r: Reader) -> AppResult<Dictionary> {
    let (code_bits, index_bits, capacity) = (r.u32()?, r.u32()?, r.u32()?);
    let n = r.count(true, 16)?;
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        pairs.push((r.u64()?, r.u64()?));
    }
    Ok(Dictionary::from_parts(pairs, code_bits, index_bits, capacity)?)
}

fn encode_table(t: &PimHashTable) -> Vec<u8> {
    let mut w = Writer::default();
    let l = t.layout();
    for v in [l.tag_bits, l.value_bits, l.entry_bits, l.capacity, t.index_bits()] {
        w.u32(v);
    }
    let rows: Vec<&BucketRow> = t.rows().collect();
    w.u64(rows.len() as u64);
    for row in rows {
        w.u32(row.bucket_id());
        w.u32(row.words().len() as u32);
        for &word in row.words() {
            w.u64(word);
        }
    }
    w.0
}

fn decode_table(mut r: Reader) -> AppResult<PimHashTable> {
    let (tag_bits, value_bits, entry_bits, capacity) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let layout = EntryLayout::new(tag_bits, value_bits, entry_bits, capacity)?;
    let mut table = PimHashTable::new(layout, r.u32()?);
    let rows = r.count(true, 8)?;
    for _ in 0..rows {
        let id = r.u32()?;
        let n = r.count(false, 8)?;
        let words = (0..n).map(|_| r.u64()).collect::<AppResult<Vec<_>>>()?;
        table.insert_row(BucketRow::from_words(id, layout, words)?)?;
    }
    Ok(table)
}

fn encode_dup(d: &DuplicationList) -> Vec<u8> {
    let mut w = Writer::default();
    w.u64(d.len() as u64);
    for list in d.lists() {
        w.u32(list.len() as u32);
        for &row in list {
            w.u32(row);
        }
    }
    w.0
}

fn decode_dup(mut r: Reader) -> AppResult<DuplicationList> {
    let n = r.count(true, 4)?;
    let mut lists = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.count(false, 4)?;
        lists.push((0..len).map(|_| r.u32()).collect::<AppResult<Vec<_>>>()?);
    }
    Ok(DuplicationList::from_lists(lists)?)
}

fn encode_fact(s: &PimState) -> Vec<u8> {
    let mut w = Writer::default();
    match s.placement {
        Placement::Replicated => {
            w.u32(0);
            w.u64(0);
        }
        Placement::Partitioned { buckets_per_rank } => {
            w.u32(1);
            w.u64(buckets_per_rank);
        }
    }
    w.u32(s.fact_layout.key_bits);
    w.u64(s.fact_layout.keys_per_burst);
    w.u64(s.fact_layout.bursts_per_row);
    w.u64(s.fact_len);
    w.u32(s.ranks.len() as u32);
    for rank in &s.ranks {
        for v in [rank.index, rank.position.channel, rank.position.dimm, rank.position.rank] {
            w.u32(v);
        }
        w.u64(rank.codes.len() as u64);
        for &c in &rank.codes {
            w.u64(c);
        }
        for &f in &rank.fact_indices {
            w.u64(f);
        }
    }
    w.0
}

struct FactPart {
    placement: Placement,
    layout: FactLayout,
    fact_len: u64,
    ranks: Vec<RankSlice>,
}

fn decode_fact(mut r: Reader) -> AppResult<FactPart> {
    let placement = match (r.u32()?, r.u64()?) {
        (0, _) => Placement::Replicated,
        (1, buckets_per_rank) => Placement::Partitioned { buckets_per_rank },
        (tag, _) => return Err(AppError::Usage(format!("dump: unknown placement {tag}"))),
    };
    let layout = FactLayout {
        key_bits: r.u32()?,
        keys_per_burst: r.u64()?,
        bursts_per_row: r.u64()?,
    };
    let fact_len = r.u64()?;
    let n = r.count(false, 24)?;
    let mut ranks = Vec::with_capacity(n);
    for _ in 0..n {
        let index = r.u32()?;
        let position = RankPosition {
            channel: r.u32()?,
            dimm: r.u32()?,
            rank: r.u32()?,
        };
        let keys = r.count(true, 16)?;
        let codes = (0..keys).map(|_| r.u64()).collect::<AppResult<Vec<_>>>()?;
        let fact_indices = (0..keys).map(|_| r.u64()).collect::<AppResult<Vec<_>>>()?;
        ranks.push(RankSlice {
            index,
            position,
            codes,
            fact_indices,
        });
    }
    Ok(FactPart {
        placement,
        layout,
        fact_len,
        ranks,
    })
}

pub fn encode(cfg: &SimConfig, meta: &DumpMeta, state: &PimState) -> AppResult<Vec<u8>> {
    let sections = [
        (Section::Config, FlatConfig::resolved(cfg).to_toml().into_bytes()),
        (Section::Meta, serde_json::to_vec(meta)?),
        (Section::Dictionary, encode_dictionary(&state.dict)),
        (Section::HashTable, encode_table(&state.table)),
        (Section::Duplication, encode_dup(&state.dup)),
        (Section::Fact, encode_fact(state)),
    ];
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    w.u64(cfg.geometry_hash());
    w.u32(sections.len() as u32);
    let mut offset = (HEADER_LEN + ENTRY_LEN * sections.len()) as u64;
    for (kind, body) in &sections {
        w.u32(*kind as u32);
        w.u64(offset);
        w.u64(body.len() as u64);
        offset += body.len() as u64;
    }
    for (_, body) in sections {
        w.0.extend_from_slice(&body);
    }
    Ok(w.0)
}

/// Read the header only.
pub fn peek_geometry_hash(bytes: &[u8]) -> AppResult<u64> {
    let mut r = Reader {
        buf: bytes,
        what: "header",
    };
    if r.take(8)? != MAGIC {
        return Err(AppError::Usage("dump: bad magic".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(AppError::Usage(format!("dump: unsupported version {version}")));
    }
    r.u64()
}

/// Parse a dump and check it against `cfg`: the geometry hash must match
/// and the structures must pass their own validation.
pub fn decode(bytes: &[u8], cfg: &SimConfig) -> AppResult<Dump> {
    let geometry_hash = peek_geometry_hash(bytes)?;
    if geometry_hash != cfg.geometry_hash() {
        return Err(Error::Config(format!(
            "dump geometry hash {geometry_hash:#018x} does not match configuration {:#018x}",
            cfg.geometry_hash()
        ))
        .into());
    }
    let mut r = Reader {
        buf: &bytes[HEADER_LEN - 4..],
        what: "section table",
    };
    let n = r.count(false, ENTRY_LEN)?;
    let mut find = std::collections::BTreeMap::new();
    for _ in 0..n {
        let (kind, offset, len) = (r.u32()?, r.u64()? as usize, r.u64()? as usize);
        let body = offset
            .checked_add(len)
            .and_then(|end| bytes.get(offset..end))
            .ok_or_else(|| AppError::Usage(format!("dump: section {kind} lies outside the file")))?;
        find.insert(kind, body);
    }
    let section = |kind: Section, what: &'static str| -> AppResult<Reader> {
        find.get(&(kind as u32))
            .map(|&buf| Reader { buf, what })
            .ok_or_else(|| AppError::Usage(format!("dump: missing {what} section")))
    };
    let config_text = std::str::from_utf8(section(Section::Config, "config")?.buf)
        .map_err(|_| AppError::Usage("dump: config section is not UTF-8".into()))?;
    let config = FlatConfig::parse(config_text)?;
    let meta: DumpMeta = serde_json::from_slice(section(Section::Meta, "meta")?.buf)?;
    let dict = decode_dictionary(section(Section::Dictionary, "dictionary")?)?;
    let table = decode_table(section(Section::HashTable, "hash table")?)?;
    let dup = decode_dup(section(Section::Duplication, "duplication")?)?;
    let fact = decode_fact(section(Section::Fact, "fact")?)?;
    table.validate()?;
    if table.index_bits() != dict.index_bits() {
        return Err(Error::Invariant("dump: table and dictionary disagree on index bits".into()).into());
    }
    let state = PimState {
        dict,
        table,
        dup,
        placement: fact.placement,
        fact_layout: fact.layout,
        ranks: fact.ranks,
        fact_len: fact.fact_len,
    };
    Ok(Dump {
        geometry_hash,
        config,
        meta,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pimjoin_core::query::QueryEngine;
    use pimjoin_core::structures::CodeAssignment;

    fn built(cfg: SimConfig) -> (DumpMeta, PimState) {
        let dim: Vec<u64> = (0..900).map(|i| i % 700).collect();
        let fact: Vec<u64> = (0..5000).map(|i| (i * 31) % 800).collect();
        let mut q = QueryEngine::new(cfg).unwrap();
        q.build(&dim, &fact, CodeAssignment::Sequential).unwrap();
        let meta = DumpMeta {
            workload: WorkloadSpec::synthetic(900, 1, 0.0, 1),
            workload_hash: 7,
            join: "r_s".into(),
            dim_rows: 900,
        };
        (meta, q.state().unwrap().clone())
    }

    #[test]
    fn round_trip() {
        for ranks in [1, 2] {
            let mut cfg = SimConfig::new();
            cfg.ranks = ranks;
            cfg.geometry.rows_per_subarray = 4;
            let (meta, state) = built(cfg);
            let bytes = encode(&cfg, &meta, &state).unwrap();
            assert_eq!(&bytes[..8], MAGIC);
            let back = decode(&bytes, &cfg).unwrap();
            assert_eq!(back.state, state);
            assert_eq!(back.meta, meta);
            assert_eq!(back.config, FlatConfig::resolved(&cfg));
        }
    }

    #[test]
    fn truncation_is_reported() {
        let cfg = SimConfig::new();
        let (meta, state) = built(cfg);
        let bytes = encode(&cfg, &meta, &state).unwrap();
        for cut in [0, 5, HEADER_LEN + 3, bytes.len() - 1] {
            assert!(decode(&bytes[..cut], &cfg).is_err(), "cut {cut}");
        }
    }
}
