use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fnv64;
use crate::mem::{MemoryGeometry, TimingParams};
use crate::rlu::RluConfig;

/// Hash-table layout knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayoutParams {
    /// Width of one packed bucket entry.
    pub entry_bits: u32,
    /// Width of the value field (row index or duplication handle).
    pub value_bits: u32,
    /// Upper bound on entries per bucket; 0 means "as many as fit the row".
    pub max_bucket_capacity: u32,
    /// Bucket-count headroom over the minimum, in percent.
    pub bucket_headroom_pct: u32,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            entry_bits: 64,
            value_bits: 31,
            max_bucket_capacity: 0,
            bucket_headroom_pct: 125,
        }
    }
}

impl LayoutParams {
    pub fn bucket_capacity(&self, geometry: &MemoryGeometry) -> Result<u32> {
        if self.entry_bits == 0 {
            return Err(Error::Config("entry_bits must be positive".into()));
        }
        let fit = geometry.row_buffer_bits() / u64::from(self.entry_bits);
        let fit = u32::try_from(fit).unwrap_or(u32::MAX);
        let cap = match self.max_bucket_capacity {
            0 => fit,
            m => m.min(fit),
        };
        if cap == 0 {
            return Err(Error::Config(format!(
                "a {}-bit entry does not fit a {}-bit row",
                self.entry_bits,
                geometry.row_buffer_bits()
            )));
        }
        Ok(cap)
    }

    pub fn validate(&self, geometry: &MemoryGeometry) -> Result<()> {
        self.bucket_capacity(geometry)?;
        if !(2..=32).contains(&self.value_bits) {
            return Err(Error::Config(format!(
                "value_bits {} outside 2..=32",
                self.value_bits
            )));
        }
        if self.entry_bits > 64 || self.entry_bits < self.value_bits + 2 {
            return Err(Error::Config(format!(
                "entry_bits {} cannot hold a {}-bit value, a flag and a tag",
                self.entry_bits, self.value_bits
            )));
        }
        if self.bucket_headroom_pct < 100 {
            return Err(Error::Config("bucket_headroom_pct must be >= 100".into()));
        }
        Ok(())
    }
}

/// Everything a simulation run is parameterized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SimConfig {
    pub geometry: MemoryGeometry,
    pub timing: TimingParams,
    pub layout: LayoutParams,
    pub rlu: RluConfig,
    /// PIM ranks participating in a query.
    pub ranks: u32,
    /// Optional host cost charged per expanded duplicate row (reported apart
    /// from the PIM cycles).
    pub host_expand_cycles_per_row: u32,
}

impl SimConfig {
    pub fn new() -> Self {
        Self {
            ranks: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.timing.validate()?;
        self.layout.validate(&self.geometry)?;
        self.rlu.validate()?;
        if self.ranks == 0 || self.ranks > self.geometry.total_ranks() {
            return Err(Error::Config(format!(
                "ranks must be within 1..={}, got {}",
                self.geometry.total_ranks(),
                self.ranks
            )));
        }
        Ok(())
    }

    /// Stable hash of the geometry and entry layout; stored in dumps so a
    /// dump is only loaded against a matching memory shape.
    pub fn geometry_hash(&self) -> u64 {
        let g = &self.geometry;
        let mut h = Fnv64::new();
        for v in [
            g.channels,
            g.dimms_per_channel,
            g.ranks_per_dimm,
            g.chips_per_rank,
            g.pim_chips_per_rank,
            g.banks_per_chip,
            g.subarrays_per_bank,
            g.rows_per_subarray,
            g.columns_per_row,
            g.chip_io_width,
            g.burst_length,
            self.layout.entry_bits,
            self.layout.value_bits,
            self.layout.max_bucket_capacity,
            self.layout.bucket_headroom_pct,
        ] {
            h.write_u64(u64::from(v));
        }
        h.finish()
    }

    /// Hash over every field.
    pub fn fingerprint(&self) -> u64 {
        let t = &self.timing;
        let r = &self.rlu;
        let mut h = Fnv64::new();
        h.write_u64(self.geometry_hash());
        for v in [
            t.clock_period_ps,
            t.t_rcd,
            t.t_rp,
            t.t_cas,
            t.t_cmp,
            t.burst_cycles,
            t.host_transfer_cycles,
            r.key_buffer_capacity,
            r.coalesce_window,
            u32::from(r.cpu_filter),
            self.ranks,
            self.host_expand_cycles_per_row,
        ] {
            h.write_u64(u64::from(v));
        }
        h.finish()
    }
}
