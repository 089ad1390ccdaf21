//! Subarray search engine: packed bucket rows, the comparator array and the
//! match-select encoder.
//!
//! A bucket row is the bit image of one PIM subarray row. Slot `i` occupies
//! bits `[i * entry_bits, (i + 1) * entry_bits)` in little-endian bit order:
//! the tag in the low bits, the value right above it and the duplication flag
//! in the most significant bit of the entry. A slot whose tag is all ones is
//! empty.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mem::{BankState, Location, RowOutcome, TimingParams};

/// Field widths of a packed bucket entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntryLayout {
    pub tag_bits: u32,
    pub value_bits: u32,
    pub entry_bits: u32,
    /// Entries per row.
    pub capacity: u32,
}

impl EntryLayout {
    pub fn new(tag_bits: u32, value_bits: u32, entry_bits: u32, capacity: u32) -> Result<Self> {
        if tag_bits == 0 || tag_bits > 63 {
            return Err(Error::Config(format!("tag width {tag_bits} outside 1..=63")));
        }
        if value_bits < 2 || value_bits > 32 {
            return Err(Error::Config(format!(
                "value width {value_bits} outside 2..=32"
            )));
        }
        if tag_bits + value_bits + 1 > entry_bits {
            return Err(Error::Config(format!(
                "tag {tag_bits} + value {value_bits} + flag does not fit a {entry_bits}-bit entry"
            )));
        }
        if entry_bits > 64 {
            return Err(Error::Config(format!("entry width {entry_bits} exceeds 64")));
        }
        if capacity == 0 {
            return Err(Error::Config("bucket capacity must be positive".into()));
        }
        Ok(Self {
            tag_bits,
            value_bits,
            entry_bits,
            capacity,
        })
    }

    pub fn empty_tag(&self) -> u64 {
        low_mask(self.tag_bits)
    }

    pub fn row_bits(&self) -> u64 {
        u64::from(self.entry_bits) * u64::from(self.capacity)
    }

    pub fn max_row_index(&self) -> u64 {
        low_mask(self.value_bits)
    }

    /// Duplication handles leave one value bit unused.
    pub fn max_handle(&self) -> u64 {
        low_mask(self.value_bits - 1)
    }
}

fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BucketEntry {
    pub tag: u64,
    /// Dimension-row index, or a duplication-list handle when `dup` is set.
    pub value: u32,
    pub dup: bool,
}

/// What a successful search returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Payload {
    pub value: u32,
    pub dup: bool,
}

impl From<BucketEntry> for Payload {
    fn from(e: BucketEntry) -> Self {
        Payload {
            value: e.value,
            dup: e.dup,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketRow {
    bucket_id: u32,
    layout: EntryLayout,
    words: Vec<u64>,
    occupancy: u32,
}

impl BucketRow {
    pub fn new(bucket_id: u32, layout: EntryLayout) -> Self {
        let mut row = Self {
            bucket_id,
            layout,
            words: vec![0; layout.row_bits().div_ceil(64) as usize],
            occupancy: 0,
        };
        for slot in 0..layout.capacity as usize {
            row.put_bits(row.tag_offset(slot), layout.tag_bits, layout.empty_tag());
        }
        row
    }

    /// Rebuild a row from its packed image.
    pub fn from_words(bucket_id: u32, layout: EntryLayout, words: Vec<u64>) -> Result<Self> {
        if words.len() as u64 != layout.row_bits().div_ceil(64) {
            return Err(Error::Invariant(format!(
                "bucket {bucket_id}: row image has {} words",
                words.len()
            )));
        }
        let mut row = Self {
            bucket_id,
            layout,
            words,
            occupancy: 0,
        };
        row.occupancy = row.entries().count() as u32;
        row.validate()?;
        Ok(row)
    }

    pub fn bucket_id(&self) -> u32 {
        self.bucket_id
    }

    pub fn layout(&self) -> &EntryLayout {
        &self.layout
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn capacity(&self) -> usize {
        self.layout.capacity as usize
    }

    pub fn occupancy(&self) -> usize {
        self.occupancy as usize
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy == 0
    }

    fn tag_offset(&self, slot: usize) -> u64 {
        slot as u64 * u64::from(self.layout.entry_bits)
    }

    fn get_bits(&self, offset: u64, width: u32) -> u64 {
        let word = (offset / 64) as usize;
        let shift = (offset % 64) as u32;
        let mut v = self.words[word] >> shift;
        if shift + width > 64 {
            v |= self.words[word + 1] << (64 - shift);
        }
        v & low_mask(width)
    }

    fn put_bits(&mut self, offset: u64, width: u32, value: u64) {
        let word = (offset / 64) as usize;
        let shift = (offset % 64) as u32;
        let mask = low_mask(width);
        let value = value & mask;
        self.words[word] = (self.words[word] & !(mask << shift)) | (value << shift);
        if shift + width > 64 {
            let spill = shift + width - 64;
            let hi_mask = low_mask(spill);
            self.words[word + 1] =
                (self.words[word + 1] & !hi_mask) | (value >> (64 - shift));
        }
    }

    /// Raw tag stored in a slot (the empty sentinel for free slots).
    pub fn raw_tag(&self, slot: usize) -> u64 {
        self.get_bits(self.tag_offset(slot), self.layout.tag_bits)
    }

    pub fn slot(&self, slot: usize) -> Option<BucketEntry> {
        let base = self.tag_offset(slot);
        let tag = self.get_bits(base, self.layout.tag_bits);
        if tag == self.layout.empty_tag() {
            return None;
        }
        let value = self.get_bits(base + u64::from(self.layout.tag_bits), self.layout.value_bits);
        let dup = self.get_bits(base + u64::from(self.layout.entry_bits) - 1, 1) == 1;
        Some(BucketEntry {
            tag,
            value: value as u32,
            dup,
        })
    }

    /// Occupied slots with their entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, BucketEntry)> + '_ {
        (0..self.capacity()).filter_map(|s| self.slot(s).map(|e| (s, e)))
    }

    pub fn find(&self, tag: u64) -> Option<(usize, BucketEntry)> {
        self.entries().find(|(_, e)| e.tag == tag)
    }

    fn check_entry(&self, entry: &BucketEntry) -> Result<()> {
        let layout = &self.layout;
        if entry.tag >= layout.empty_tag() {
            return Err(Error::Invariant(format!(
                "tag {:#x} does not fit {} bits or is the empty sentinel",
                entry.tag, layout.tag_bits
            )));
        }
        let limit = if entry.dup {
            layout.max_handle()
        } else {
            layout.max_row_index()
        };
        if u64::from(entry.value) > limit {
            return Err(Error::Invariant(format!(
                "value {} exceeds {}-bit field",
                entry.value,
                if entry.dup {
                    layout.value_bits - 1
                } else {
                    layout.value_bits
                }
            )));
        }
        Ok(())
    }

    fn put_slot(&mut self, slot: usize, entry: Option<BucketEntry>) {
        let base = self.tag_offset(slot);
        let (tag, value, dup) = match entry {
            Some(e) => (e.tag, u64::from(e.value), u64::from(e.dup)),
            None => (self.layout.empty_tag(), 0, 0),
        };
        let was = self.slot(slot).is_some();
        self.put_bits(base, self.layout.tag_bits, tag);
        self.put_bits(base + u64::from(self.layout.tag_bits), self.layout.value_bits, value);
        self.put_bits(base + u64::from(self.layout.entry_bits) - 1, 1, dup);
        match (was, entry.is_some()) {
            (false, true) => self.occupancy += 1,
            (true, false) => self.occupancy -= 1,
            _ => {}
        }
    }

    /// Store an entry in the first free slot.
    pub fn insert(&mut self, entry: BucketEntry) -> Result<usize> {
        self.check_entry(&entry)?;
        if self.find(entry.tag).is_some() {
            return Err(Error::Invariant(format!(
                "bucket {} already holds tag {:#x}",
                self.bucket_id, entry.tag
            )));
        }
        let slot = (0..self.capacity())
            .find(|&s| self.slot(s).is_none())
            .ok_or_else(|| {
                Error::capacity(
                    format!("bucket {} is full", self.bucket_id),
                    u64::from(self.layout.capacity),
                )
            })?;
        self.put_slot(slot, Some(entry));
        Ok(slot)
    }

    /// Overwrite (or clear) one slot, rejecting writes that would break the
    /// unique-tag invariant.
    pub fn write_slot(&mut self, slot: usize, entry: Option<BucketEntry>) -> Result<()> {
        if slot >= self.capacity() {
            return Err(Error::capacity(
                format!("slot {slot}"),
                u64::from(self.layout.capacity),
            ));
        }
        if let Some(e) = &entry {
            self.check_entry(e)?;
            if let Some((other, _)) = self.find(e.tag) {
                if other != slot {
                    return Err(Error::Invariant(format!(
                        "bucket {} already holds tag {:#x} in slot {other}",
                        self.bucket_id, e.tag
                    )));
                }
            }
        }
        self.put_slot(slot, entry);
        Ok(())
    }

    /// Replace the value field of an occupied slot, keeping tag and flag.
    pub fn set_value(&mut self, slot: usize, value: u32) -> Result<()> {
        let mut entry = self.slot(slot).ok_or_else(|| {
            Error::Invariant(format!("slot {slot} of bucket {} is empty", self.bucket_id))
        })?;
        entry.value = value;
        self.write_slot(slot, Some(entry))
    }

    pub(crate) fn set_entry_unchecked(&mut self, slot: usize, entry: BucketEntry) {
        self.put_slot(slot, Some(entry));
    }

    /// Tags among occupied slots are pairwise distinct.
    pub fn validate(&self) -> Result<()> {
        let mut tags: Vec<u64> = self.entries().map(|(_, e)| e.tag).collect();
        tags.sort_unstable();
        if let Some(w) = tags.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Invariant(format!(
                "bucket {} holds tag {:#x} twice",
                self.bucket_id, w[0]
            )));
        }
        Ok(())
    }
}

/// Comparator outputs, one bit per slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchVector {
    bits: Vec<u64>,
    len: usize,
}

impl MatchVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            bits: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut mv = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                mv.set(i);
            }
        }
        mv
    }

    pub fn set(&mut self, i: usize) {
        self.bits[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i))
    }
}

/// Run every comparator of the row against `probe_tag`.
pub fn compare_row(row: &BucketRow, probe_tag: u64) -> MatchVector {
    let mut mv = MatchVector::zeros(row.capacity());
    let empty = row.layout.empty_tag();
    for slot in 0..row.capacity() {
        let tag = row.raw_tag(slot);
        if tag != empty && tag == probe_tag {
            mv.set(slot);
        }
    }
    mv
}

/// Encode comparator results into the matched payload, or `None` when
/// nothing matched.
pub fn match_select(mv: &MatchVector, row: &BucketRow) -> Result<Option<Payload>> {
    if mv.len() != row.capacity() {
        return Err(Error::Invariant(format!(
            "match vector has {} bits for a {}-slot row",
            mv.len(),
            row.capacity()
        )));
    }
    let mut ones = mv.ones();
    let Some(first) = ones.next() else {
        return Ok(None);
    };
    if ones.next().is_some() {
        return Err(Error::CorruptedTable {
            bucket: row.bucket_id,
            matches: mv.count_ones(),
        });
    }
    let entry = row.slot(first).ok_or_else(|| {
        Error::Invariant(format!("match on empty slot {first} of bucket {}", row.bucket_id))
    })?;
    Ok(Some(entry.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeResult {
    pub payload: Option<Payload>,
    pub cycles: u64,
    pub outcome: RowOutcome,
}

/// Search one bucket row. `row` is `None` for a bucket that was never
/// written, which reads as an empty bucket. The cost is the row access,
/// the comparator delay and one result burst, whatever the outcome.
pub fn probe_row(
    row: Option<&BucketRow>,
    tag: u64,
    loc: &Location,
    state: &mut BankState,
    timing: &TimingParams,
) -> Result<ProbeResult> {
    let access = state.access_row(loc, timing);
    let payload = match row {
        Some(row) => match_select(&compare_row(row, tag), row)?,
        None => None,
    };
    Ok(ProbeResult {
        payload,
        cycles: access.cycles + u64::from(timing.t_cmp) + u64::from(timing.burst_cycles),
        outcome: access.outcome,
    })
}
