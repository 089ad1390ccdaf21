//! JSON run reports and the CSV rows sweeps are assembled from.

use pimjoin_core::query::{LatencyReport, QueryCost, SetupReport};
use pimjoin_core::workload::{WorkloadKind, WorkloadSpec};
use serde::{Deserialize, Serialize};

use crate::config::FlatConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Join,
    Distinct,
    Where,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "query", rename_all = "snake_case")]
pub enum QueryResult {
    Join { latency: LatencyReport },
    Distinct { distinct_values: u64, cost: QueryCost },
    Where { literal: u64, matching_rows: u64, cost: QueryCost },
}

/// Headline numbers of a run, whatever the query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total_cycles: u64,
    pub seconds: f64,
    pub activations: u64,
    pub probes_issued: u64,
    pub coalesce_hits: u64,
    pub stall_cycles: u64,
    pub result_rows: u64,
}

/// Everything `run` reports. Wall-clock time is deliberately absent, so
/// equal inputs give byte-identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub workload: WorkloadSpec,
    pub workload_hash: u64,
    pub join: String,
    pub config: FlatConfig,
    pub config_fingerprint: u64,
    pub geometry_hash: u64,
    pub setup: SetupReport,
    pub summary: Summary,
    pub result: QueryResult,
}

impl QueryResult {
    pub fn summary(&self, clock_period_ps: u32) -> Summary {
        let seconds = |cycles: u64| cycles as f64 * f64::from(clock_period_ps) * 1e-12;
        match self {
            QueryResult::Join { latency } => Summary {
                total_cycles: latency.total_cycles,
                seconds: latency.seconds,
                activations: latency.pipeline.row_activations,
                probes_issued: latency.pipeline.probes_issued,
                coalesce_hits: latency.pipeline.probes_coalesced,
                stall_cycles: latency.pipeline.stall_cycles,
                result_rows: latency.result_rows,
            },
            QueryResult::Distinct {
                distinct_values,
                cost,
            } => Summary {
                total_cycles: cost.cycles,
                seconds: seconds(cost.cycles),
                activations: cost.activations,
                probes_issued: 0,
                coalesce_hits: 0,
                stall_cycles: 0,
                result_rows: *distinct_values,
            },
            QueryResult::Where {
                matching_rows,
                cost,
                ..
            } => Summary {
                total_cycles: cost.cycles,
                seconds: seconds(cost.cycles),
                activations: cost.activations,
                probes_issued: 1,
                coalesce_hits: 0,
                stall_cycles: 0,
                result_rows: *matching_rows,
            },
        }
    }
}

/// One sweep line, copied field by field from a [`RunRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub workload: &'static str,
    pub scale_factor: Option<f64>,
    pub size_r: Option<u64>,
    pub zipf_s: Option<f64>,
    pub seed: u64,
    pub join: String,
    pub query: QueryKind,
    pub t_cmp: u32,
    pub ranks: u32,
    pub total_cycles: u64,
    pub seconds: f64,
    pub activations: u64,
    pub probes_issued: u64,
    pub coalesce_hits: u64,
    pub stall_cycles: u64,
    pub result_rows: u64,
    pub population_cycles: u64,
    pub workload_hash: u64,
    pub config_fingerprint: u64,
}

impl SweepRow {
    pub fn from_record(r: &RunRecord, query: QueryKind) -> Self {
        let (workload, scale_factor, size_r, zipf_s) = match r.workload.kind {
            WorkloadKind::SsbLike { scale_factor, .. } => ("ssb", Some(scale_factor), None, None),
            WorkloadKind::SyntheticPair { size_r, zipf_s, .. } => {
                ("synthetic", None, Some(size_r), Some(zipf_s))
            }
        };
        Self {
            workload,
            scale_factor,
            size_r,
            zipf_s,
            seed: r.workload.seed,
            join: r.join.clone(),
            query,
            t_cmp: r.config.t_cmp.unwrap_or_default(),
            ranks: r.config.ranks.unwrap_or_default(),
            total_cycles: r.summary.total_cycles,
            seconds: r.summary.seconds,
            activations: r.summary.activations,
            probes_issued: r.summary.probes_issued,
            coalesce_hits: r.summary.coalesce_hits,
            stall_cycles: r.summary.stall_cycles,
            result_rows: r.summary.result_rows,
            population_cycles: r.setup.population.cycles,
            workload_hash: r.workload_hash,
            config_fingerprint: r.config_fingerprint,
        }
    }
}

/// What `build` prints next to the dump it writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildRecord {
    pub workload_hash: u64,
    pub join: String,
    pub config_fingerprint: u64,
    pub geometry_hash: u64,
    /// Host wall-clock spent building the dictionary, hash table and
    /// duplication list.
    pub construction_seconds: f64,
    /// Modeled cycles for writing the structures into the device.
    pub population_cycles: u64,
    pub population_seconds: f64,
    pub dump_bytes: u64,
    pub setup: SetupReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub records: u64,
    pub total_cycles: Option<u64>,
    pub replayed_cycles: u64,
}
