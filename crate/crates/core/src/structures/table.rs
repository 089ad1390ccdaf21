use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::search::{compare_row, match_select, BucketEntry, BucketRow, EntryLayout, Payload};

use super::dictionary::{join_code, split_code, Dictionary};

/// The unique-key hash table: one packed row per bucket. Buckets that were
/// never written are not stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PimHashTable {
    layout: EntryLayout,
    index_bits: u32,
    buckets: BTreeMap<u32, BucketRow>,
}

impl PimHashTable {
    pub fn new(layout: EntryLayout, index_bits: u32) -> Self {
        Self {
            layout,
            index_bits,
            buckets: BTreeMap::new(),
        }
    }

    /// Empty table shaped for `dict` under `cfg`'s entry layout.
    pub fn for_dictionary(dict: &Dictionary, cfg: &SimConfig) -> Result<Self> {
        let layout = EntryLayout::new(
            dict.tag_bits(),
            cfg.layout.value_bits,
            cfg.layout.entry_bits,
            dict.bucket_capacity(),
        )?;
        Ok(Self::new(layout, dict.index_bits()))
    }

    pub fn layout(&self) -> &EntryLayout {
        &self.layout
    }

    pub fn index_bits(&self) -> u32 {
        self.index_bits
    }

    pub fn bucket_count(&self) -> u64 {
        1 << self.index_bits
    }

    pub fn bucket(&self, id: u32) -> Option<&BucketRow> {
        self.buckets.get(&id)
    }

    pub fn bucket_mut(&mut self, id: u32) -> Result<&mut BucketRow> {
        if u64::from(id) >= self.bucket_count() {
            return Err(Error::capacity(format!("bucket {id}"), self.bucket_count()));
        }
        let layout = self.layout;
        Ok(self
            .buckets
            .entry(id)
            .or_insert_with(|| BucketRow::new(id, layout)))
    }

    /// Written buckets in id order.
    pub fn rows(&self) -> impl Iterator<Item = &BucketRow> {
        self.buckets.values()
    }

    pub fn insert_row(&mut self, row: BucketRow) -> Result<()> {
        if row.layout() != &self.layout {
            return Err(Error::Invariant(format!(
                "bucket {} has a foreign layout",
                row.bucket_id()
            )));
        }
        if u64::from(row.bucket_id()) >= self.bucket_count() {
            return Err(Error::capacity(
                format!("bucket {}", row.bucket_id()),
                self.bucket_count(),
            ));
        }
        self.buckets.insert(row.bucket_id(), row);
        Ok(())
    }

    /// Functional lookup through the comparator model, without timing.
    pub fn lookup(&self, code: u64) -> Result<Option<Payload>> {
        let (bucket, tag) = split_code(code, self.index_bits);
        match self.buckets.get(&bucket) {
            Some(row) => match_select(&compare_row(row, tag), row),
            None => Ok(None),
        }
    }

    /// (code, payload) of every stored entry.
    pub fn entries(&self) -> impl Iterator<Item = (u64, Payload)> + '_ {
        self.buckets.values().flat_map(move |row| {
            row.entries()
                .map(move |(_, e)| (join_code(row.bucket_id(), e.tag, self.index_bits), e.into()))
        })
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(BucketRow::occupancy).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn non_empty_buckets(&self) -> usize {
        self.buckets.values().filter(|r| !r.is_empty()).count()
    }

    pub fn validate(&self) -> Result<()> {
        for (&id, row) in &self.buckets {
            if row.bucket_id() != id || u64::from(id) >= self.bucket_count() {
                return Err(Error::Invariant(format!("bucket {id} is misplaced")));
            }
            row.validate()?;
        }
        Ok(())
    }
}

/// Row lists for keys that occur more than once in the dimension.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DuplicationList {
    lists: Vec<Vec<u32>>,
}

impl DuplicationList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_lists(lists: Vec<Vec<u32>>) -> Result<Self> {
        let dup = Self { lists };
        dup.validate()?;
        Ok(dup)
    }

    pub fn get(&self, handle: u32) -> Option<&[u32]> {
        self.lists.get(handle as usize).map(Vec::as_slice)
    }

    /// Start a list and return its handle.
    pub fn push(&mut self, rows: Vec<u32>) -> u32 {
        self.lists.push(rows);
        (self.lists.len() - 1) as u32
    }

    pub fn append(&mut self, handle: u32, row: u32) -> Result<()> {
        self.lists
            .get_mut(handle as usize)
            .ok_or_else(|| Error::Invariant(format!("unknown duplication handle {handle}")))?
            .push(row);
        Ok(())
    }

    /// Number of lists.
    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    /// Rows held across all lists.
    pub fn total_rows(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.lists
    }

    pub fn validate(&self) -> Result<()> {
        match self.lists.iter().position(|l| l.len() < 2) {
            Some(h) => Err(Error::Invariant(format!(
                "duplication list {h} holds fewer than two rows"
            ))),
            None => Ok(()),
        }
    }
}

/// Resolve a payload to the dimension rows it stands for.
pub fn expand_payload(payload: Payload, dup: &DuplicationList) -> Result<Vec<u32>> {
    if !payload.dup {
        return Ok(vec![payload.value]);
    }
    dup.get(payload.value)
        .map(<[u32]>::to_vec)
        .ok_or_else(|| Error::Invariant(format!("dangling duplication handle {}", payload.value)))
}

/// Insert `(key, dimension row)` pairs. The first row of a key is stored
/// inline; the second moves both rows into a duplication list and turns the
/// entry into a handle; later rows are appended to that list.
pub fn build_hash_structures(
    dim_rows: impl IntoIterator<Item = (u64, u32)>,
    dict: &Dictionary,
    cfg: &SimConfig,
) -> Result<(PimHashTable, DuplicationList)> {
    let mut table = PimHashTable::for_dictionary(dict, cfg)?;
    let mut dup = DuplicationList::new();
    let max_row = table.layout().max_row_index();
    let max_handle = table.layout().max_handle();
    for (key, row_index) in dim_rows {
        let code = dict
            .encode(key)
            .ok_or_else(|| Error::Domain(format!("key {key} is not in the dictionary")))?;
        if u64::from(row_index) > max_row {
            return Err(Error::capacity(format!("row index {row_index}"), max_row));
        }
        let (bucket, tag) = split_code(code, dict.index_bits());
        let row = table.bucket_mut(bucket)?;
        match row.find(tag) {
            None => {
                row.insert(BucketEntry {
                    tag,
                    value: row_index,
                    dup: false,
                })?;
            }
            Some((_, entry)) if entry.dup => dup.append(entry.value, row_index)?,
            Some((slot, entry)) => {
                let handle = dup.lists.len() as u64;
                if handle > max_handle {
                    return Err(Error::capacity("duplication handles", max_handle + 1));
                }
                dup.push(vec![entry.value, row_index]);
                row.set_entry_unchecked(
                    slot,
                    BucketEntry {
                        tag,
                        value: handle as u32,
                        dup: true,
                    },
                );
            }
        }
    }
    Ok((table, dup))
}
