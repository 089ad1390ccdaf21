//! User-visible queries: join, select distinct, select where (=) and the
//! three update commands.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::mem::{burst_count, BankState, ChipSelect, RankPosition};
use crate::rlu::{combine_rank_totals, run_join_stream, PipelineTrace, Recorder};
use crate::search::{probe_row, BucketEntry, Payload};
use crate::structures::{
    build_dictionary, build_hash_structures, expand_payload, populate_pim, split_code,
    CodeAssignment, Placement, PimState, PopulationReport,
};
use crate::trace::AccessRecord;

/// One inner-join output row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JoinPair {
    pub key: u64,
    pub fact_index: u64,
    pub dim_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankReport {
    pub index: u32,
    pub position: RankPosition,
    pub trace: PipelineTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Modeled device cycles: slowest rank or busiest channel.
    pub total_cycles: u64,
    pub seconds: f64,
    /// Busiest channel's result-return cycles.
    pub channel_cycles: u64,
    /// Counters summed over ranks.
    pub pipeline: PipelineTrace,
    pub ranks: Vec<RankReport>,
    pub result_rows: u64,
    /// Result rows produced by expanding duplication lists on the host.
    pub expanded_rows: u64,
    /// Optional host cost of that expansion, not part of `total_cycles`.
    pub host_expand_cycles: u64,
}

/// Cost of a single-command query or update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCost {
    pub cycles: u64,
    pub activations: u64,
    pub bursts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetupReport {
    pub population: PopulationReport,
    pub dim_rows: u64,
    pub fact_rows: u64,
    pub distinct_keys: u64,
    pub remapped_keys: u64,
    pub code_bits: u32,
    pub index_bits: u32,
    pub buckets_used: u64,
    pub duplicate_lists: u64,
    pub placement: Placement,
}

impl SetupReport {
    pub fn describe(state: &PimState, population: PopulationReport, dim_rows: u64) -> Self {
        Self {
            population,
            dim_rows,
            fact_rows: state.fact_len,
            distinct_keys: state.dict.len() as u64,
            remapped_keys: state.dict.remapped(),
            code_bits: state.dict.code_bits(),
            index_bits: state.dict.index_bits(),
            buckets_used: state.table.non_empty_buckets() as u64,
            duplicate_lists: state.dup.len() as u64,
            placement: state.placement,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JoinOptions {
    pub record_accesses: bool,
    pub record_timeline: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinOutput {
    /// Sorted by fact index, then dimension row.
    pub pairs: Vec<JoinPair>,
    pub report: LatencyReport,
    pub accesses: Vec<AccessRecord>,
}

/// What an [`QueryEngine::entry_update`] writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntryTarget {
    /// One slot of a bucket row; `None` clears it.
    Bucket {
        bucket: u32,
        slot: usize,
        entry: Option<BucketEntry>,
    },
    /// One key of the fact column, by its original position.
    Fact { index: u64, key: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexUpdateOutcome {
    pub matched: bool,
    pub cost: QueryCost,
}

#[derive(Debug, Clone)]
pub struct QueryEngine {
    cfg: SimConfig,
    state: Option<PimState>,
}

impl QueryEngine {
    /// An engine with no structures; every query fails with a state error
    /// until [`QueryEngine::build`] or [`QueryEngine::with_state`].
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, state: None })
    }

    pub fn with_state(cfg: SimConfig, state: PimState) -> Result<Self> {
        cfg.validate()?;
        if state.ranks.len() != cfg.ranks as usize {
            return Err(Error::Config(format!(
                "structures are placed on {} ranks, configuration has {}",
                state.ranks.len(),
                cfg.ranks
            )));
        }
        Ok(Self {
            cfg,
            state: Some(state),
        })
    }

    /// Build the dictionary, hash table and duplication list over
    /// `dim_keys` (row `i` holds `dim_keys[i]`) and load them with the
    /// encoded `fact_keys`.
    pub fn build(
        &mut self,
        dim_keys: &[u64],
        fact_keys: &[u64],
        assignment: CodeAssignment,
    ) -> Result<SetupReport> {
        let cfg = &self.cfg;
        let dict = build_dictionary(dim_keys, cfg, assignment)?;
        let rows = dim_keys.iter().enumerate().map(|(i, &k)| (k, i as u32));
        let (table, dup) = build_hash_structures(rows, &dict, cfg)?;
        let (state, population) = populate_pim(table, dup, dict, fact_keys, cfg)?;
        let report = SetupReport::describe(&state, population, dim_keys.len() as u64);
        self.state = Some(state);
        Ok(report)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn state(&self) -> Result<&PimState> {
        self.state
            .as_ref()
            .ok_or_else(|| Error::State("join structures have not been built".into()))
    }

    fn state_mut(&mut self) -> Result<&mut PimState> {
        self.state
            .as_mut()
            .ok_or_else(|| Error::State("join structures have not been built".into()))
    }

    pub fn join(&self) -> Result<(Vec<JoinPair>, LatencyReport)> {
        let out = self.join_with(JoinOptions::default())?;
        Ok((out.pairs, out.report))
    }

    /// Inner join of the fact column with the dimension. Every rank runs its
    /// share in parallel; flagged payloads expand through the duplication
    /// list on the host.
    pub fn join_with(&self, opts: JoinOptions) -> Result<JoinOutput> {
        let state = self.state()?;
        let cfg = &self.cfg;
        let mut pairs = Vec::new();
        let mut pipeline = PipelineTrace::default();
        let mut ranks = Vec::with_capacity(state.ranks.len());
        let mut accesses = Vec::new();
        let mut expanded_rows = 0u64;
        for rank in &state.ranks {
            let mut rec = Recorder::new(opts.record_timeline, opts.record_accesses);
            let (results, trace) = run_join_stream(&rank.codes, state, rank, cfg, &mut rec)?;
            trace.check()?;
            for (j, payload) in results.into_iter().enumerate() {
                let Some(payload) = payload else { continue };
                let code = rank.codes[j];
                let key = state.dict.decode(code).ok_or_else(|| {
                    Error::Invariant(format!("matched code {code:#x} has no dictionary value"))
                })?;
                let rows = expand_payload(payload, &state.dup)?;
                if payload.dup {
                    expanded_rows += rows.len() as u64;
                }
                let fact_index = rank.fact_indices[j];
                pairs.extend(rows.into_iter().map(|dim_index| JoinPair {
                    key,
                    fact_index,
                    dim_index,
                }));
            }
            pipeline.accumulate(&trace);
            accesses.extend(rec.accesses.unwrap_or_default());
            ranks.push(RankReport {
                index: rank.index,
                position: rank.position,
                trace,
            });
        }
        pairs.sort_unstable_by_key(|p| (p.fact_index, p.dim_index));

        let totals: Vec<(RankPosition, u64, u64)> = ranks
            .iter()
            .map(|r| (r.position, r.trace.total_cycles, r.trace.stage_busy[3]))
            .collect();
        let total_cycles = combine_rank_totals(&totals);
        let channel_cycles = combine_rank_totals(
            &totals
                .iter()
                .map(|&(p, _, busy)| (p, 0, busy))
                .collect::<Vec<_>>(),
        );
        pipeline.total_cycles = total_cycles;
        let report = LatencyReport {
            total_cycles,
            seconds: cfg.timing.cycles_to_seconds(total_cycles),
            channel_cycles,
            pipeline,
            ranks,
            result_rows: pairs.len() as u64,
            expanded_rows,
            host_expand_cycles: expanded_rows * u64::from(cfg.host_expand_cycles_per_row),
        };
        Ok(JoinOutput {
            pairs,
            report,
            accesses,
        })
    }

    /// Every distinct key in the table, read row by row from the PIM chips.
    pub fn select_distinct(&self) -> Result<(Vec<u64>, QueryCost)> {
        let state = self.state()?;
        let cfg = &self.cfg;
        let entry_bits = state.table.layout().entry_bits;
        let mut banks = BankState::new();
        let mut cost = QueryCost::default();
        let mut values = Vec::with_capacity(state.table.len());
        // replicas hold identical rows, so each bucket is read once
        let readers: &[_] = match state.placement {
            Placement::Replicated => &state.ranks[..1],
            Placement::Partitioned { .. } => &state.ranks,
        };
        for rank in readers {
            for bucket in state.owned_buckets(rank.index) {
                let Some(row) = state.table.bucket(bucket as u32) else { continue };
                if row.is_empty() {
                    continue;
                }
                let loc = state.bucket_location(rank, bucket as u32, cfg)?;
                let bursts = burst_count(row.occupancy() as u64, entry_bits, 1, &cfg.geometry)?;
                cost.cycles += banks.access_row(&loc, &cfg.timing).cycles
                    + bursts * cfg.timing.host_burst();
                cost.activations += 1;
                cost.bursts += bursts;
                for (_, e) in row.entries() {
                    let code = crate::structures::join_code(row.bucket_id(), e.tag, state.dict.index_bits());
                    values.push(state.dict.decode(code).ok_or_else(|| {
                        Error::Invariant(format!("stored code {code:#x} has no dictionary value"))
                    })?);
                }
            }
        }
        values.sort_unstable();
        Ok((values, cost))
    }

    fn probe_literal(&self, key: u64, banks: &mut BankState) -> Result<(u64, usize, Option<Payload>, QueryCost)> {
        let state = self.state()?;
        let code = state.dict.encode_or_sentinel(key);
        let (bucket, tag) = split_code(code, state.dict.index_bits());
        let rank = match state.placement {
            Placement::Replicated => &state.ranks[0],
            Placement::Partitioned { buckets_per_rank } => {
                &state.ranks[(u64::from(bucket) / buckets_per_rank) as usize]
            }
        };
        let loc = state.bucket_location(rank, bucket, &self.cfg)?;
        let probe = probe_row(state.table.bucket(bucket), tag, &loc, banks, &self.cfg.timing)?;
        let slot = state
            .table
            .bucket(bucket)
            .and_then(|row| row.find(tag))
            .map_or(usize::MAX, |(s, _)| s);
        let cost = QueryCost {
            cycles: probe.cycles,
            activations: u64::from(probe.outcome.is_activation()),
            bursts: 1,
        };
        Ok((code, slot, probe.payload, cost))
    }

    /// Dimension rows whose key equals `literal`: one probe, whatever the
    /// table size or outcome.
    pub fn select_where_eq(&self, literal: u64) -> Result<(Vec<u32>, QueryCost)> {
        let state = self.state()?;
        let (_, _, payload, cost) = self.probe_literal(literal, &mut BankState::new())?;
        let rows = match payload {
            Some(p) => expand_payload(p, &state.dup)?,
            None => Vec::new(),
        };
        Ok((rows, cost))
    }

    /// Write one bucket slot or one fact key: one row access and one burst.
    pub fn entry_update(&mut self, target: EntryTarget) -> Result<QueryCost> {
        let cfg = self.cfg;
        let state = self.state_mut()?;
        let mut banks = BankState::new();
        let loc = match target {
            EntryTarget::Bucket {
                bucket,
                slot,
                entry,
            } => {
                if let Some(e) = entry {
                    if e.dup && state.dup.get(e.value).is_none() {
                        return Err(Error::Invariant(format!(
                            "entry refers to missing duplication list {}",
                            e.value
                        )));
                    }
                }
                let rank_index = match state.placement {
                    Placement::Replicated => 0,
                    Placement::Partitioned { buckets_per_rank } => {
                        (u64::from(bucket) / buckets_per_rank) as usize
                    }
                };
                let rank = state.ranks.get(rank_index).ok_or_else(|| {
                    Error::capacity(format!("bucket {bucket}"), state.table.bucket_count())
                })?;
                let loc = state.bucket_location(rank, bucket, &cfg)?;
                state.table.bucket_mut(bucket)?.write_slot(slot, entry)?;
                loc
            }
            EntryTarget::Fact { index, key } => {
                let (rank_index, pos) = locate_fact(state, index)?;
                let code = state.dict.encode_or_sentinel(key);
                if let Placement::Partitioned { buckets_per_rank } = state.placement {
                    let owner = u64::from(split_code(code, state.dict.index_bits()).0) / buckets_per_rank;
                    if owner != rank_index as u64 {
                        return Err(Error::Invariant(format!(
                            "key {key} belongs to rank {owner}, fact entry {index} lives on rank {rank_index}"
                        )));
                    }
                }
                let rank = &mut state.ranks[rank_index];
                rank.codes[pos] = code;
                state
                    .fact_layout
                    .key_location(pos as u64, rank.position, &cfg.geometry)?
            }
        };
        let access = banks.access_row(&loc, &cfg.timing);
        Ok(QueryCost {
            cycles: access.cycles + cfg.timing.host_burst(),
            activations: u64::from(access.outcome.is_activation()),
            bursts: 1,
        })
    }

    /// Search for `key` and overwrite the value field of its entry, keeping
    /// the duplication flag.
    pub fn index_update(&mut self, key: u64, new_value: u32) -> Result<IndexUpdateOutcome> {
        let cfg = self.cfg;
        let (code, slot, payload, mut cost) = self.probe_literal(key, &mut BankState::new())?;
        cost.cycles += cfg.timing.host_burst();
        cost.bursts += 1;
        let Some(payload) = payload else {
            return Ok(IndexUpdateOutcome {
                matched: false,
                cost,
            });
        };
        let state = self.state_mut()?;
        if payload.dup && state.dup.get(new_value).is_none() {
            return Err(Error::Invariant(format!(
                "flagged entry would point at missing duplication list {new_value}"
            )));
        }
        let bucket = split_code(code, state.dict.index_bits()).0;
        state.table.bucket_mut(bucket)?.set_value(slot, new_value)?;
        Ok(IndexUpdateOutcome {
            matched: true,
            cost,
        })
    }

    /// Overwrite `keys.len()` consecutive fact keys of rank `rank` starting
    /// at its local position `start`, row by row with burst writes.
    pub fn table_update(&mut self, rank: u32, start: u64, keys: &[u64]) -> Result<QueryCost> {
        let cfg = self.cfg;
        let state = self.state_mut()?;
        let slice = state
            .ranks
            .get(rank as usize)
            .ok_or_else(|| Error::capacity(format!("rank {rank}"), u64::from(cfg.ranks)))?;
        let end = start + keys.len() as u64;
        if end > slice.codes.len() as u64 {
            return Err(Error::capacity(
                format!("fact range {start}..{end} on rank {rank}"),
                slice.codes.len() as u64,
            ));
        }
        let codes: Vec<u64> = keys.iter().map(|&k| state.dict.encode_or_sentinel(k)).collect();
        if let Placement::Partitioned { buckets_per_rank } = state.placement {
            let index_bits = state.dict.index_bits();
            if let Some(c) = codes
                .iter()
                .find(|&&c| u64::from(split_code(c, index_bits).0) / buckets_per_rank != u64::from(rank))
            {
                return Err(Error::Invariant(format!(
                    "code {c:#x} belongs to another rank's partition"
                )));
            }
        }
        let layout = state.fact_layout;
        let position = slice.position;
        let mut banks = BankState::new();
        let mut cost = QueryCost::default();
        let mut pos = start;
        while pos < end {
            let row_end = ((pos / layout.keys_per_row()) + 1) * layout.keys_per_row();
            let stop = row_end.min(end);
            let bursts = (stop - 1) / layout.keys_per_burst - pos / layout.keys_per_burst + 1;
            let loc = layout.key_location(pos, position, &cfg.geometry)?;
            debug_assert_eq!(loc.chip, ChipSelect::Regular);
            let access = banks.access_row(&loc, &cfg.timing);
            cost.cycles += access.cycles + bursts * cfg.timing.host_burst();
            cost.activations += u64::from(access.outcome.is_activation());
            cost.bursts += bursts;
            pos = stop;
        }
        state.ranks[rank as usize].codes[start as usize..end as usize].copy_from_slice(&codes);
        Ok(cost)
    }
}

fn locate_fact(state: &PimState, index: u64) -> Result<(usize, usize)> {
    for (r, rank) in state.ranks.iter().enumerate() {
        if let Ok(pos) = rank.fact_indices.binary_search(&index) {
            return Ok((r, pos));
        }
    }
    Err(Error::capacity(format!("fact entry {index}"), state.fact_len))
}
