//! Host-side join structures: the dictionary that steers keys into
//! buckets, the unique-key hash table, the duplication list and their
//! placement on the PIM ranks.

mod dictionary;
mod overhead;
mod state;
mod table;

pub use dictionary::{
    bucket_of, join_code, size_index_bits, split_code, CodeAssignment, Dictionary,
    DictionaryParams,
};
pub use overhead::{compute_data_overhead, structure_overhead, OverheadParts, OverheadReport};
pub use state::{
    choose_placement, partition_fact_keys, populate_pim, FactLayout, PimState, Placement,
    PopulationReport, RankSlice,
};
pub use table::{build_hash_structures, expand_payload, DuplicationList, PimHashTable};

use crate::config::SimConfig;
use crate::error::Result;

/// Dictionary over `dim_keys`, sized for `cfg`.
pub fn build_dictionary(
    dim_keys: &[u64],
    cfg: &SimConfig,
    assignment: CodeAssignment,
) -> Result<Dictionary> {
    Dictionary::build(dim_keys, &DictionaryParams::from_config(cfg, assignment)?)
}
