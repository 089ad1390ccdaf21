use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{compute_stall_n, Coalesce, CoalesceWindow, Mode};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::mem::{BankState, RankPosition, RowOutcome};
use crate::search::{probe_row, Payload};
use crate::structures::{split_code, PimState, RankSlice};
use crate::trace::{AccessKind, AccessRecord};

/// One stage occupying `[start, end)` for one item (a key group for
/// stages 1 and 2, a key for stages 3 and 4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpan {
    pub stage: u8,
    pub item: u64,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub keys: u64,
    pub key_fetch_bursts: u64,
    pub probes_issued: u64,
    /// Keys answered from an earlier result (window hits and host-filtered
    /// keys).
    pub probes_coalesced: u64,
    pub cpu_filtered: u64,
    /// Activations on the PIM chip.
    pub row_activations: u64,
    pub row_hits: u64,
    /// Activations on the regular chips while fetching keys.
    pub fact_row_activations: u64,
    pub results_returned: u64,
    pub stall_cycles: u64,
    pub stall_n: u32,
    /// Busy cycles of fetch, copy, probe and return.
    pub stage_busy: [u64; 4],
    pub total_cycles: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timeline: Vec<StageSpan>,
}

impl PipelineTrace {
    pub fn check(&self) -> Result<()> {
        if self.probes_issued + self.probes_coalesced != self.keys {
            return Err(Error::Invariant(format!(
                "{} issued + {} coalesced != {} keys",
                self.probes_issued, self.probes_coalesced, self.keys
            )));
        }
        if self.results_returned != self.probes_issued {
            return Err(Error::Invariant("a probe returned no result".into()));
        }
        if self.stage_busy.iter().any(|&b| b > self.total_cycles) {
            return Err(Error::Invariant("a stage is busier than the run".into()));
        }
        Ok(())
    }

    pub fn accumulate(&mut self, other: &PipelineTrace) {
        self.keys += other.keys;
        self.key_fetch_bursts += other.key_fetch_bursts;
        self.probes_issued += other.probes_issued;
        self.probes_coalesced += other.probes_coalesced;
        self.cpu_filtered += other.cpu_filtered;
        self.row_activations += other.row_activations;
        self.row_hits += other.row_hits;
        self.fact_row_activations += other.fact_row_activations;
        self.results_returned += other.results_returned;
        self.stall_cycles += other.stall_cycles;
        self.stall_n = other.stall_n;
        for (a, b) in self.stage_busy.iter_mut().zip(other.stage_busy) {
            *a += b;
        }
    }
}

/// Optional outputs of a run.
#[derive(Debug, Clone, Default)]
pub struct Recorder {
    pub record_timeline: bool,
    pub accesses: Option<Vec<AccessRecord>>,
    spans: Vec<StageSpan>,
}

impl Recorder {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(record_timeline: bool, record_accesses: bool) -> Self {
        Self {
            record_timeline,
            accesses: record_accesses.then(Vec::new),
            spans: Vec::new(),
        }
    }

    pub fn with_timeline() -> Self {
        Self {
            record_timeline: true,
            ..Self::default()
        }
    }

    pub fn with_accesses() -> Self {
        Self {
            accesses: Some(Vec::new()),
            ..Self::default()
        }
    }

    fn access(&mut self, rec: AccessRecord) {
        if let Some(log) = &mut self.accesses {
            log.push(rec);
        }
    }
}

/// Run one rank's fact keys through fetch, copy, probe and return.
///
/// `codes` sit at consecutive positions of the rank's fact column from 0.
/// Stages 1 and 2 handle one fetch burst of keys at a time, stages 3 and 4
/// one fresh key at a time; each stage serves its items in order and an
/// item enters a stage once it has left the previous one. A fetch burst is
/// only issued while at most `stall_n` fetched keys await their probe.
pub fn run_join_stream(
    codes: &[u64],
    pim: &PimState,
    rank: &RankSlice,
    cfg: &SimConfig,
    rec: &mut Recorder,
) -> Result<(Vec<Option<Payload>>, PipelineTrace)> {
    if cfg.rlu.mode != Mode::Pim {
        return Err(Error::State("join stream issued in DRAM mode".into()));
    }
    let timing = &cfg.timing;
    let geometry = &cfg.geometry;
    let stall_n = compute_stall_n(&cfg.rlu, geometry, pim.key_bits())? as usize;
    let layout = pim.fact_layout;
    let kpb = layout.keys_per_burst as usize;
    let index_bits = pim.dict.index_bits();
    let burst = u64::from(timing.burst_cycles);
    let host_burst = timing.host_burst();

    let mut trace = PipelineTrace {
        keys: codes.len() as u64,
        stall_n: stall_n as u32,
        ..PipelineTrace::default()
    };
    let mut results: Vec<Option<Payload>> = vec![None; codes.len()];

    // host-side filter: only keys fresh within the window are sent
    let mut copy_later: Vec<(usize, usize)> = Vec::new();
    let sent: Vec<usize> = if cfg.rlu.cpu_filter {
        let mut window = CoalesceWindow::new(cfg.rlu.coalesce_window);
        let mut sent = Vec::with_capacity(codes.len());
        for (i, &code) in codes.iter().enumerate() {
            match window.push(code, i as u64) {
                Coalesce::Fresh => sent.push(i),
                Coalesce::Duplicate { of } => copy_later.push((i, of as usize)),
            }
        }
        trace.cpu_filtered = copy_later.len() as u64;
        sent
    } else {
        (0..codes.len()).collect()
    };

    let mut banks = BankState::new();
    let mut window = CoalesceWindow::new(cfg.rlu.coalesce_window);
    let (mut s1_free, mut s2_free, mut s3_free, mut s4_free) = (0u64, 0u64, 0u64, 0u64);
    let mut probe_done: Vec<u64> = Vec::new();
    let mut total = 0u64;

    for (group, chunk) in sent.chunks(kpb).enumerate() {
        let issued = probe_done.len();
        let mut start = s1_free;
        if issued > stall_n {
            start = start.max(probe_done[issued - stall_n - 1]);
        }
        trace.stall_cycles += start - s1_free;

        let fetch_pos = (group * kpb) as u64;
        let loc = layout.key_location(fetch_pos, rank.position, geometry)?;
        let access = banks.access_row(&loc, timing);
        if access.outcome.is_activation() {
            trace.fact_row_activations += 1;
        }
        rec.access(AccessRecord {
            kind: AccessKind::Read,
            loc,
            cycle: start,
        });
        let s1_end = start + access.cycles + burst;
        s1_free = s1_end;
        trace.key_fetch_bursts += 1;
        trace.stage_busy[0] += s1_end - start;

        let s2_start = s1_end.max(s2_free);
        let s2_end = s2_start + 1;
        s2_free = s2_end;
        trace.stage_busy[1] += 1;
        total = total.max(s2_end);
        if rec.record_timeline {
            rec_span(rec, 1, group as u64, start, s1_end);
            rec_span(rec, 2, group as u64, s2_start, s2_end);
        }

        for (offset, &i) in chunk.iter().enumerate() {
            let position = fetch_pos + offset as u64;
            if let Coalesce::Duplicate { of } = window.push(codes[i], position) {
                results[i] = results[sent[of as usize]];
                trace.probes_coalesced += 1;
                continue;
            }
            let (bucket, tag) = split_code(codes[i], index_bits);
            let loc = pim.bucket_location(rank, bucket, cfg)?;
            let s3_start = s2_end.max(s3_free);
            let probe = probe_row(pim.table.bucket(bucket), tag, &loc, &mut banks, timing)?;
            rec.access(AccessRecord {
                kind: AccessKind::Read,
                loc,
                cycle: s3_start,
            });
            match probe.outcome {
                RowOutcome::Hit => trace.row_hits += 1,
                _ => trace.row_activations += 1,
            }
            let s3_end = s3_start + probe.cycles;
            s3_free = s3_end;
            probe_done.push(s3_end);
            trace.probes_issued += 1;
            trace.stage_busy[2] += probe.cycles;

            let s4_start = s3_end.max(s4_free);
            let s4_end = s4_start + host_burst;
            s4_free = s4_end;
            trace.results_returned += 1;
            trace.stage_busy[3] += host_burst;
            total = total.max(s4_end);
            if rec.record_timeline {
                rec_span(rec, 3, i as u64, s3_start, s3_end);
                rec_span(rec, 4, i as u64, s4_start, s4_end);
            }
            results[i] = probe.payload;
        }
    }

    for (i, of) in copy_later {
        results[i] = results[of];
    }
    trace.probes_coalesced += trace.cpu_filtered;
    trace.total_cycles = total;
    if rec.record_timeline {
        trace.timeline = core::mem::take(&mut rec.spans);
    }
    Ok((results, trace))
}

fn rec_span(rec: &mut Recorder, stage: u8, item: u64, start: u64, end: u64) {
    rec.spans.push(StageSpan {
        stage,
        item,
        start,
        end,
    });
}

/// Join total over ranks: the slowest rank, or the result traffic of the
/// busiest channel when ranks sharing a channel saturate it.
pub fn combine_rank_totals(ranks: &[(RankPosition, u64, u64)]) -> u64 {
    let mut per_channel: BTreeMap<u32, u64> = BTreeMap::new();
    let mut slowest = 0;
    for &(pos, total, result_busy) in ranks {
        slowest = slowest.max(total);
        *per_channel.entry(pos.channel).or_default() += result_busy;
    }
    per_channel.values().copied().fold(slowest, u64::max)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoubleBufferReport {
    pub loads: Vec<u64>,
    pub probes: Vec<u64>,
    pub total_cycles: u64,
}

/// Loading partition `i + 1` overlaps probing partition `i`.
pub fn double_buffer_total(loads: &[u64], probes: &[u64]) -> u64 {
    let n = loads.len().min(probes.len());
    if n == 0 {
        return 0;
    }
    let overlapped: u64 = (0..n - 1).map(|i| loads[i + 1].max(probes[i])).sum();
    loads[0] + overlapped + probes[n - 1]
}

/// Stream fact partitions that do not fit at once: each is written to the
/// rank's regular chips and then probed, the next load overlapping the
/// current probe phase.
pub fn run_double_buffered(
    partitions: &[Vec<u64>],
    pim: &PimState,
    rank: &RankSlice,
    cfg: &SimConfig,
) -> Result<(Vec<Option<Payload>>, DoubleBufferReport)> {
    let capacity = pim.fact_layout.capacity(&cfg.geometry);
    let mut loads = Vec::with_capacity(partitions.len());
    let mut probes = Vec::with_capacity(partitions.len());
    let mut results = Vec::new();
    for part in partitions {
        if part.len() as u64 > capacity {
            return Err(Error::capacity(
                format!("partition of {} keys", part.len()),
                capacity,
            ));
        }
        let mut banks = BankState::new();
        loads.push(pim.fact_layout.write_cycles(part.len() as u64, rank.position, &mut banks, cfg)?);
        let (r, t) = run_join_stream(part, pim, rank, cfg, &mut Recorder::none())?;
        probes.push(t.total_cycles);
        results.extend(r);
    }
    let total_cycles = double_buffer_total(&loads, &probes);
    Ok((
        results,
        DoubleBufferReport {
            loads,
            probes,
            total_cycles,
        },
    ))
}
