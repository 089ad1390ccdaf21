//! Seeded workload generators: an SSB-like star schema and Zipf-skewed
//! synthetic R/S pairs.

mod ssb;
mod synthetic;
mod zipf;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fnv64;

pub use ssb::{civil_from_days, gen_ssb_like, ssb_row_counts, SsbOptions, SsbRowCounts, DATE_ROWS};
pub use synthetic::{gen_synthetic_pair, mix32};
pub use zipf::{gen_zipf_keys, harmonic, Zipf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadKind {
    SsbLike {
        scale_factor: f64,
        /// Consecutive fact rows sharing one supplier key.
        supplier_run_length: u32,
    },
    SyntheticPair {
        size_r: u64,
        /// |S| / |R|.
        multiplier: u32,
        zipf_s: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    /// Width of uncompressed keys.
    pub key_bits: u32,
    pub seed: u64,
    /// Fraction of fact keys replaced by keys absent from the dimension.
    #[serde(default)]
    pub miss_rate: f64,
}

impl WorkloadSpec {
    pub fn ssb(scale_factor: f64, seed: u64) -> Self {
        Self {
            kind: WorkloadKind::SsbLike {
                scale_factor,
                supplier_run_length: 1,
            },
            key_bits: 32,
            seed,
            miss_rate: 0.0,
        }
    }

    pub fn synthetic(size_r: u64, multiplier: u32, zipf_s: f64, seed: u64) -> Self {
        Self {
            kind: WorkloadKind::SyntheticPair {
                size_r,
                multiplier,
                zipf_s,
            },
            key_bits: 32,
            seed,
            miss_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.miss_rate) {
            return Err(Error::Domain(format!("miss rate {} outside [0, 1]", self.miss_rate)));
        }
        if self.key_bits == 0 || self.key_bits > 63 {
            return Err(Error::Domain(format!("key width {} outside 1..=63", self.key_bits)));
        }
        match self.kind {
            WorkloadKind::SsbLike {
                scale_factor,
                supplier_run_length,
            } => {
                if !(scale_factor > 0.0 && scale_factor.is_finite()) {
                    return Err(Error::Domain(format!("scale factor {scale_factor} must be > 0")));
                }
                if supplier_run_length == 0 {
                    return Err(Error::Domain("supplier run length must be >= 1".into()));
                }
            }
            WorkloadKind::SyntheticPair {
                size_r,
                multiplier,
                zipf_s,
            } => {
                if size_r == 0 || size_r > 1 << 32 {
                    return Err(Error::Domain(format!("|R| = {size_r} outside 1..=2^32")));
                }
                if ![1, 2, 4, 8].contains(&multiplier) {
                    return Err(Error::Domain(format!("multiplier {multiplier} not in {{1,2,4,8}}")));
                }
                if !(0.0..=2.0).contains(&zipf_s) {
                    return Err(Error::Domain(format!("zipf exponent {zipf_s} outside [0, 2]")));
                }
            }
        }
        Ok(())
    }

    /// Platform-independent hash identifying the generated data.
    pub fn hash(&self) -> u64 {
        let mut h = Fnv64::new();
        match self.kind {
            WorkloadKind::SsbLike {
                scale_factor,
                supplier_run_length,
            } => {
                h.write(b"ssb_like");
                h.write_u64(scale_factor.to_bits());
                h.write_u64(u64::from(supplier_run_length));
            }
            WorkloadKind::SyntheticPair {
                size_r,
                multiplier,
                zipf_s,
            } => {
                h.write(b"synthetic_pair");
                h.write_u64(size_r);
                h.write_u64(u64::from(multiplier));
                h.write_u64(zipf_s.to_bits());
            }
        }
        h.write_u64(u64::from(self.key_bits));
        h.write_u64(self.seed);
        h.write_u64(self.miss_rate.to_bits());
        h.finish()
    }

    pub fn generate(&self) -> Result<Workload> {
        self.validate()?;
        match self.kind {
            WorkloadKind::SsbLike {
                scale_factor,
                supplier_run_length,
            } => gen_ssb_like(
                scale_factor,
                self.seed,
                &SsbOptions {
                    supplier_run_length,
                    miss_rate: self.miss_rate,
                },
            )
            .map(|tables| Workload::new(*self, tables, ssb::joins())),
            WorkloadKind::SyntheticPair {
                size_r,
                multiplier,
                zipf_s,
            } => gen_synthetic_pair(size_r, multiplier, zipf_s, self.seed, self.miss_rate)
                .map(|(r, s)| Workload::new(*self, alloc::vec![r, s], synthetic::joins())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    /// Bytes per row in the uncompressed source format.
    pub raw_row_bytes: u32,
}

impl Table {
    pub fn new(name: &str, raw_row_bytes: u32) -> Self {
        Self {
            name: name.to_string(),
            columns: Vec::new(),
            raw_row_bytes,
        }
    }

    pub fn with_column(mut self, name: &str, values: Vec<u64>) -> Self {
        self.columns.push(Column {
            name: name.to_string(),
            values,
        });
        self
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, |c| c.values.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Result<&[u64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
            .ok_or_else(|| Error::Domain(format!("table {} has no column {name}", self.name)))
    }

    pub fn raw_bytes(&self) -> u64 {
        self.len() as u64 * u64::from(self.raw_row_bytes)
    }
}

/// A dimension-to-fact equi-join the workload supports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinSpec {
    pub name: String,
    pub dim_table: String,
    pub dim_key: String,
    pub fact_table: String,
    pub fact_key: String,
}

impl JoinSpec {
    pub fn new(name: &str, dim: (&str, &str), fact: (&str, &str)) -> Self {
        Self {
            name: name.to_string(),
            dim_table: dim.0.to_string(),
            dim_key: dim.1.to_string(),
            fact_table: fact.0.to_string(),
            fact_key: fact.1.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub spec: WorkloadSpec,
    pub tables: Vec<Table>,
    pub joins: Vec<JoinSpec>,
}

impl Workload {
    pub fn new(spec: WorkloadSpec, tables: Vec<Table>, joins: Vec<JoinSpec>) -> Self {
        Self { spec, tables, joins }
    }

    pub fn hash(&self) -> u64 {
        self.spec.hash()
    }

    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Domain(format!("no table named {name}")))
    }

    pub fn join(&self, name: &str) -> Result<&JoinSpec> {
        self.joins
            .iter()
            .find(|j| j.name == name)
            .ok_or_else(|| Error::Domain(format!("no join named {name}")))
    }

    /// The first listed join; the natural default for a workload.
    pub fn default_join(&self) -> &JoinSpec {
        &self.joins[0]
    }

    /// (dimension keys, fact keys) of a join.
    pub fn join_columns(&self, join: &JoinSpec) -> Result<(&[u64], &[u64])> {
        Ok((
            self.table(&join.dim_table)?.column(&join.dim_key)?,
            self.table(&join.fact_table)?.column(&join.fact_key)?,
        ))
    }

    pub fn raw_bytes(&self) -> u64 {
        self.tables.iter().map(Table::raw_bytes).sum()
    }
}
