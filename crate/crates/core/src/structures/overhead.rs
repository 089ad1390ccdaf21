use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::Result;
use crate::workload::Workload;

use super::{build_dictionary, build_hash_structures, CodeAssignment, Dictionary, DuplicationList, PimHashTable};

/// Bytes added by the structures of one join.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadParts {
    /// Value plus code per dictionary entry.
    pub dictionary: u64,
    /// Bit-packed encoded copy of the fact key column.
    pub fact_codes: u64,
    /// Occupied bucket entries.
    pub hash_table: u64,
    /// Row ids and a length word per list.
    pub duplication: u64,
}

impl OverheadParts {
    pub fn total(&self) -> u64 {
        self.dictionary + self.fact_codes + self.hash_table + self.duplication
    }

    fn add(&mut self, other: &OverheadParts) {
        self.dictionary += other.dictionary;
        self.fact_codes += other.fact_codes;
        self.hash_table += other.hash_table;
        self.duplication += other.duplication;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub per_join: Vec<(String, OverheadParts)>,
    pub parts: OverheadParts,
    pub total_bytes: u64,
    pub raw_bytes: u64,
    pub ratio: f64,
}

pub fn structure_overhead(
    dict: &Dictionary,
    fact_len: u64,
    table: &PimHashTable,
    dup: &DuplicationList,
) -> OverheadParts {
    let code_bytes = u64::from(dict.code_bits()).div_ceil(8);
    OverheadParts {
        dictionary: dict.len() as u64 * (4 + code_bytes),
        fact_codes: (fact_len * u64::from(dict.code_bits())).div_ceil(8),
        hash_table: table.len() as u64 * u64::from(table.layout().entry_bits).div_ceil(8),
        duplication: 4 * (dup.total_rows() + dup.len()) as u64,
    }
}

/// Extra bytes of every join's structures relative to the raw tables.
pub fn compute_data_overhead(workload: &Workload, cfg: &SimConfig) -> Result<OverheadReport> {
    let mut per_join = Vec::new();
    let mut parts = OverheadParts::default();
    for join in &workload.joins {
        let (dim, fact) = workload.join_columns(join)?;
        let dict = build_dictionary(dim, cfg, CodeAssignment::Sequential)?;
        let rows = dim.iter().enumerate().map(|(i, &k)| (k, i as u32));
        let (table, dup) = build_hash_structures(rows, &dict, cfg)?;
        let p = structure_overhead(&dict, fact.len() as u64, &table, &dup);
        parts.add(&p);
        per_join.push((join.name.clone(), p));
    }
    let total_bytes = parts.total();
    let raw_bytes = workload.raw_bytes();
    Ok(OverheadReport {
        per_join,
        parts,
        total_bytes,
        raw_bytes,
        ratio: total_bytes as f64 / raw_bytes.max(1) as f64,
    })
}
