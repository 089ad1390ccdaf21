//! Per-access records of a modeled run and their replay through the memory
//! model.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::mem::{BankState, ChipSelect, Location, RankPosition};
use crate::rlu::combine_rank_totals;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessKind {
    Read,
    Write,
}

/// One device access and the cycle it was issued at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRecord {
    pub kind: AccessKind,
    pub loc: Location,
    pub cycle: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct RankReplay {
    fetch_copy_end: u64,
    result_end: u64,
    result_busy: u64,
}

/// Recompute a join's total cycles from its access records alone.
///
/// A regular-chip read is one key-fetch burst followed by the one-cycle
/// buffer copy; a PIM read is one probe followed by its result return.
/// Row costs come from a fresh [`BankState`] fed the records in order.
pub fn replay_join(records: &[AccessRecord], cfg: &SimConfig) -> Result<u64> {
    let timing = &cfg.timing;
    let mut banks = BankState::new();
    let mut ranks: BTreeMap<(u32, u32, u32), RankReplay> = BTreeMap::new();
    for rec in records {
        if rec.kind != AccessKind::Read {
            return Err(Error::Invariant(format!(
                "join traces hold reads only, found a write at cycle {}",
                rec.cycle
            )));
        }
        rec.loc.validate(&cfg.geometry)?;
        let cost = banks.access_row(&rec.loc, timing).cycles;
        let rank = ranks
            .entry((rec.loc.channel, rec.loc.dimm, rec.loc.rank))
            .or_default();
        match rec.loc.chip {
            ChipSelect::Regular => {
                let fetched = rec.cycle + cost + u64::from(timing.burst_cycles);
                rank.fetch_copy_end = fetched.max(rank.fetch_copy_end) + 1;
            }
            ChipSelect::Pim => {
                let probed =
                    rec.cycle + cost + u64::from(timing.t_cmp) + u64::from(timing.burst_cycles);
                rank.result_end = probed.max(rank.result_end) + timing.host_burst();
                rank.result_busy += timing.host_burst();
            }
        }
    }
    let totals: Vec<(RankPosition, u64, u64)> = ranks
        .iter()
        .map(|(&(channel, dimm, rank), r)| {
            (
                RankPosition {
                    channel,
                    dimm,
                    rank,
                },
                r.fetch_copy_end.max(r.result_end),
                r.result_busy,
            )
        })
        .collect();
    Ok(combine_rank_totals(&totals))
}
