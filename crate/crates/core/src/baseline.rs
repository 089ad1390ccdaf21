//! Software reference joins and the modeled-versus-measured comparison.

use alloc::string::String;
use alloc::vec::Vec;

use hashbrown::HashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::JoinPair;

/// Every `(fact, dim)` pair with equal keys, by exhaustive comparison.
pub fn nested_loop_join(dim_keys: &[u64], fact_keys: &[u64]) -> Vec<JoinPair> {
    let mut out = Vec::new();
    for (f, &fk) in fact_keys.iter().enumerate() {
        for (d, &dk) in dim_keys.iter().enumerate() {
            if fk == dk {
                out.push(JoinPair {
                    key: fk,
                    fact_index: f as u64,
                    dim_index: d as u32,
                });
            }
        }
    }
    out
}

/// Build a hash table on the smaller side and probe it with the larger.
/// Output is sorted like [`nested_loop_join`].
pub fn classic_hash_join(dim_keys: &[u64], fact_keys: &[u64]) -> Vec<JoinPair> {
    let mut out = Vec::new();
    if dim_keys.len() <= fact_keys.len() {
        let mut table: HashMap<u64, Vec<u32>> = HashMap::with_capacity(dim_keys.len());
        for (d, &k) in dim_keys.iter().enumerate() {
            table.entry(k).or_default().push(d as u32);
        }
        for (f, &k) in fact_keys.iter().enumerate() {
            if let Some(rows) = table.get(&k) {
                out.extend(rows.iter().map(|&d| JoinPair {
                    key: k,
                    fact_index: f as u64,
                    dim_index: d,
                }));
            }
        }
    } else {
        let mut table: HashMap<u64, Vec<u64>> = HashMap::with_capacity(fact_keys.len());
        for (f, &k) in fact_keys.iter().enumerate() {
            table.entry(k).or_default().push(f as u64);
        }
        for (d, &k) in dim_keys.iter().enumerate() {
            if let Some(rows) = table.get(&k) {
                out.extend(rows.iter().map(|&f| JoinPair {
                    key: k,
                    fact_index: f,
                    dim_index: d as u32,
                }));
            }
        }
        out.sort_unstable_by_key(|p| (p.fact_index, p.dim_index));
    }
    out
}

/// Distinct values of a column, sorted.
pub fn distinct_oracle(column: &[u64]) -> Vec<u64> {
    let mut v = column.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Row indices holding `literal`.
pub fn scan_oracle(column: &[u64], literal: u64) -> Vec<u32> {
    column
        .iter()
        .enumerate()
        .filter(|(_, &k)| k == literal)
        .map(|(i, _)| i as u32)
        .collect()
}

/// One side of a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub workload_hash: u64,
    pub config_fingerprint: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub workload_hash: u64,
    pub modeled_cycles: u64,
    pub clock_period_ps: u32,
    pub modeled_seconds: f64,
    pub measured_seconds: f64,
    pub measured_threads: u32,
    /// measured / modeled.
    pub speedup: f64,
    pub config_fingerprint: u64,
    pub caveat: String,
}

pub const SPEEDUP_CAVEAT: &str = "modeled PIM cycles are compared with a measured host run; \
the ratio is indicative only and is not calibrated against hardware";

/// Put a modeled run next to a measured software join of the same
/// workload.
pub fn compare_runs(
    modeled_cycles: u64,
    clock_period_ps: u32,
    modeled: RunSummary,
    measured: RunSummary,
    measured_threads: u32,
) -> Result<SpeedupReport> {
    if modeled.workload_hash != measured.workload_hash {
        return Err(Error::WorkloadMismatch {
            left: modeled.workload_hash,
            right: measured.workload_hash,
        });
    }
    let modeled_seconds = modeled_cycles as f64 * f64::from(clock_period_ps) * 1e-12;
    Ok(SpeedupReport {
        workload_hash: modeled.workload_hash,
        modeled_cycles,
        clock_period_ps,
        modeled_seconds,
        measured_seconds: measured.seconds,
        measured_threads,
        speedup: if modeled_seconds > 0.0 {
            measured.seconds / modeled_seconds
        } else {
            f64::INFINITY
        },
        config_fingerprint: modeled.config_fingerprint,
        caveat: SPEEDUP_CAVEAT.into(),
    })
}
