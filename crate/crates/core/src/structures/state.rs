use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::mem::{stripe_row, BankState, ChipSelect, Location, MemoryGeometry, RankPosition};

use super::dictionary::{bucket_of, Dictionary};
use super::table::{DuplicationList, PimHashTable};

/// How the fact column is packed on the regular chips of a rank: whole keys
/// per burst across the data chips, bursts filling a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactLayout {
    pub key_bits: u32,
    pub keys_per_burst: u64,
    pub bursts_per_row: u64,
}

impl FactLayout {
    pub fn new(key_bits: u32, geometry: &MemoryGeometry) -> Result<Self> {
        let burst_bits = u64::from(geometry.data_chips()) * geometry.chip_burst_bits();
        if key_bits == 0 || u64::from(key_bits) > burst_bits {
            return Err(Error::Config(format!(
                "{key_bits}-bit keys do not fit a {burst_bits}-bit burst"
            )));
        }
        Ok(Self {
            key_bits,
            keys_per_burst: burst_bits / u64::from(key_bits),
            bursts_per_row: u64::from(geometry.columns_per_row / geometry.burst_length),
        })
    }

    pub fn keys_per_row(&self) -> u64 {
        self.keys_per_burst * self.bursts_per_row
    }

    /// Keys one rank's regular chips can hold.
    pub fn capacity(&self, geometry: &MemoryGeometry) -> u64 {
        geometry.rows_per_chip() * self.keys_per_row()
    }

    pub fn rows_for(&self, keys: u64) -> u64 {
        keys.div_ceil(self.keys_per_row())
    }

    /// Location of the burst holding key `position` of a rank's column.
    pub fn key_location(
        &self,
        position: u64,
        rank: RankPosition,
        geometry: &MemoryGeometry,
    ) -> Result<Location> {
        let row = position / self.keys_per_row();
        let burst = (position % self.keys_per_row()) / self.keys_per_burst;
        let mut loc = stripe_row(row, ChipSelect::Regular, rank, geometry)?;
        loc.column_offset = (burst * geometry.chip_burst_bits() / 8) as u32;
        Ok(loc)
    }

    /// Cycles to write `keys` keys from position 0, row by row.
    pub fn write_cycles(
        &self,
        keys: u64,
        rank: RankPosition,
        state: &mut BankState,
        cfg: &SimConfig,
    ) -> Result<u64> {
        let capacity = self.capacity(&cfg.geometry);
        if keys > capacity {
            return Err(Error::capacity(
                format!("{keys} fact keys on one rank (use partitioned loading)"),
                capacity,
            ));
        }
        let mut cycles = 0;
        for row in 0..self.rows_for(keys) {
            let loc = stripe_row(row, ChipSelect::Regular, rank, &cfg.geometry)?;
            let in_row = (keys - row * self.keys_per_row()).min(self.keys_per_row());
            cycles += state.access_row(&loc, &cfg.timing).cycles
                + in_row.div_ceil(self.keys_per_burst) * cfg.timing.host_burst();
        }
        Ok(cycles)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    /// Every rank holds the whole table.
    Replicated,
    /// Rank `r` holds buckets `[r * per_rank, (r + 1) * per_rank)`.
    Partitioned { buckets_per_rank: u64 },
}

/// The share of a join that runs on one rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankSlice {
    pub index: u32,
    pub position: RankPosition,
    /// Encoded fact keys in the order stored on this rank.
    pub codes: Vec<u64>,
    /// Position of each of those keys in the original fact column.
    pub fact_indices: Vec<u64>,
}

/// Host structures plus their placement on the PIM ranks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PimState {
    pub dict: Dictionary,
    pub table: PimHashTable,
    pub dup: DuplicationList,
    pub placement: Placement,
    pub fact_layout: FactLayout,
    pub ranks: Vec<RankSlice>,
    pub fact_len: u64,
}

impl PimState {
    /// Row on this rank's PIM chip holding `bucket`.
    pub fn bucket_location(&self, rank: &RankSlice, bucket: u32, cfg: &SimConfig) -> Result<Location> {
        let local = match self.placement {
            Placement::Replicated => u64::from(bucket),
            Placement::Partitioned { buckets_per_rank } => {
                let start = u64::from(rank.index) * buckets_per_rank;
                let local = u64::from(bucket).wrapping_sub(start);
                if local >= buckets_per_rank {
                    return Err(Error::Invariant(format!(
                        "bucket {bucket} probed on rank {} which does not own it",
                        rank.index
                    )));
                }
                local
            }
        };
        stripe_row(local, ChipSelect::Pim, rank.position, &cfg.geometry)
    }

    /// Buckets stored on rank `index`.
    pub fn owned_buckets(&self, index: u32) -> core::ops::Range<u64> {
        match self.placement {
            Placement::Replicated => 0..self.table.bucket_count(),
            Placement::Partitioned { buckets_per_rank } => {
                let start = u64::from(index) * buckets_per_rank;
                start..(start + buckets_per_rank).min(self.table.bucket_count())
            }
        }
    }

    pub fn key_bits(&self) -> u32 {
        self.dict.code_bits()
    }
}

pub fn choose_placement(bucket_count: u64, cfg: &SimConfig) -> Result<Placement> {
    let ranks = u64::from(cfg.ranks.max(1));
    if ranks == 1 || bucket_count <= u64::from(cfg.geometry.rows_per_subarray) {
        if bucket_count > cfg.geometry.rows_per_chip() {
            return Err(Error::capacity(
                format!("{bucket_count} buckets"),
                cfg.geometry.rows_per_chip(),
            ));
        }
        return Ok(Placement::Replicated);
    }
    let per_rank = bucket_count.div_ceil(ranks);
    if per_rank > cfg.geometry.rows_per_chip() {
        return Err(Error::capacity(
            format!("{per_rank} buckets per rank"),
            cfg.geometry.rows_per_chip(),
        ));
    }
    Ok(Placement::Partitioned {
        buckets_per_rank: per_rank,
    })
}

/// Timing of the initial data load.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationReport {
    pub cycles: u64,
    pub hash_rows_written: u64,
    pub fact_rows_written: u64,
}

/// Encode the fact column, place the table and the keys on the ranks and
/// charge the sequential writes. Absent fact keys are stored as the
/// sentinel code.
pub fn populate_pim(
    table: PimHashTable,
    dup: DuplicationList,
    dict: Dictionary,
    fact_keys: &[u64],
    cfg: &SimConfig,
) -> Result<(PimState, PopulationReport)> {
    cfg.validate()?;
    let geometry = &cfg.geometry;
    let placement = choose_placement(table.bucket_count(), cfg)?;
    let fact_layout = FactLayout::new(dict.code_bits(), geometry)?;
    let rank_count = cfg.ranks.max(1);
    let mut ranks = (0..rank_count)
        .map(|i| {
            Ok(RankSlice {
                index: i,
                position: geometry.rank_position(i)?,
                codes: Vec::new(),
                fact_indices: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = fact_keys.len() as u64;
    let chunk = n.div_ceil(u64::from(rank_count)).max(1);
    for (i, &key) in fact_keys.iter().enumerate() {
        let code = dict.encode_or_sentinel(key);
        let owner = match placement {
            Placement::Replicated => (i as u64 / chunk) as usize,
            Placement::Partitioned { buckets_per_rank } => {
                (u64::from(bucket_of(code, dict.index_bits())) / buckets_per_rank) as usize
            }
        };
        ranks[owner].codes.push(code);
        ranks[owner].fact_indices.push(i as u64);
    }

    let mut state = PimState {
        dict,
        table,
        dup,
        placement,
        fact_layout,
        ranks: Vec::new(),
        fact_len: n,
    };
    let mut report = PopulationReport::default();
    let mut banks = BankState::new();
    let row_bursts = fact_layout.bursts_per_row * cfg.timing.host_burst();
    for rank in &ranks {
        for bucket in state.owned_buckets(rank.index) {
            if state.table.bucket(bucket as u32).is_none() {
                continue;
            }
            let loc = state.bucket_location(rank, bucket as u32, cfg)?;
            report.cycles += banks.access_row(&loc, &cfg.timing).cycles + row_bursts;
            report.hash_rows_written += 1;
        }
        report.cycles +=
            fact_layout.write_cycles(rank.codes.len() as u64, rank.position, &mut banks, cfg)?;
        report.fact_rows_written += fact_layout.rows_for(rank.codes.len() as u64);
    }
    state.ranks = ranks;
    Ok((state, report))
}

/// Split a fact column into partitions that each fit one rank.
pub fn partition_fact_keys(codes: &[u64], layout: &FactLayout, geometry: &MemoryGeometry) -> Vec<Vec<u64>> {
    let cap = layout.capacity(geometry).max(1) as usize;
    if codes.is_empty() {
        return vec![Vec::new()];
    }
    codes.chunks(cap).map(<[u64]>::to_vec).collect()
}
