//! The rank-level unit: mode switching, the key buffer stall rule, the
//! coalescing window and the four-stage join pipeline.

mod pipeline;

use alloc::collections::VecDeque;
use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mem::MemoryGeometry;

pub use pipeline::{
    combine_rank_totals, double_buffer_total, run_double_buffered, run_join_stream,
    DoubleBufferReport, PipelineTrace, Recorder, StageSpan,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Dram,
    #[default]
    Pim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RluConfig {
    /// Fact keys the RLU buffer holds.
    pub key_buffer_capacity: u32,
    /// Recent stream positions checked for duplicate keys.
    pub coalesce_window: u32,
    /// Drop in-window duplicates on the host before they are sent.
    pub cpu_filter: bool,
    pub mode: Mode,
}

impl Default for RluConfig {
    fn default() -> Self {
        Self {
            key_buffer_capacity: 1024,
            coalesce_window: 8,
            cpu_filter: false,
            mode: Mode::Pim,
        }
    }
}

impl RluConfig {
    pub fn validate(&self) -> Result<()> {
        if self.coalesce_window == 0 {
            return Err(Error::Config("coalesce_window must be at least 1".into()));
        }
        if self.key_buffer_capacity < self.coalesce_window {
            return Err(Error::Config(format!(
                "key buffer ({}) smaller than the coalescing window ({})",
                self.key_buffer_capacity, self.coalesce_window
            )));
        }
        Ok(())
    }
}

/// Commands recognized on the special command address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Opcode {
    PimStart,
    PimOff,
    Join,
    SelectDistinct,
    SelectWhereEq,
    EntryUpdate,
    IndexUpdate,
    TableUpdate,
}

impl Opcode {
    pub const ALL: [Opcode; 8] = [
        Opcode::PimStart,
        Opcode::PimOff,
        Opcode::Join,
        Opcode::SelectDistinct,
        Opcode::SelectWhereEq,
        Opcode::EntryUpdate,
        Opcode::IndexUpdate,
        Opcode::TableUpdate,
    ];

    pub const fn code(self) -> u32 {
        match self {
            Opcode::PimStart => 0x01,
            Opcode::PimOff => 0x02,
            Opcode::Join => 0x10,
            Opcode::SelectDistinct => 0x11,
            Opcode::SelectWhereEq => 0x12,
            Opcode::EntryUpdate => 0x20,
            Opcode::IndexUpdate => 0x21,
            Opcode::TableUpdate => 0x22,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|op| op.code() == code)
            .ok_or(Error::RejectedCommand(code))
    }
}

/// Mode register of one rank-level unit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Rlu {
    mode: Mode,
}

impl Rlu {
    /// Starts in DRAM mode.
    pub fn new() -> Self {
        Self { mode: Mode::Dram }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Apply a command written to the command address.
    pub fn set_mode(&mut self, cmd: u32) -> Result<Mode> {
        match Opcode::from_code(cmd)? {
            Opcode::PimStart => self.mode = Mode::Pim,
            Opcode::PimOff => self.mode = Mode::Dram,
            op if self.mode == Mode::Dram => {
                return Err(Error::State(format!("{op:?} issued in DRAM mode")));
            }
            _ => {}
        }
        Ok(self.mode)
    }
}

/// Keys per fetch burst across the data chips (fractional).
pub fn keys_per_fetch_burst(geometry: &MemoryGeometry, key_bits: u32) -> Result<f64> {
    if key_bits == 0 {
        return Err(Error::Config("key width must be positive".into()));
    }
    let bits = u64::from(geometry.data_chips())
        * u64::from(geometry.chip_io_width)
        * u64::from(geometry.burst_length);
    Ok(bits as f64 / f64::from(key_bits))
}

/// Outstanding-key threshold: a new fetch burst is issued only while at
/// most this many fetched keys still await their probe.
pub fn compute_stall_n(cfg: &RluConfig, geometry: &MemoryGeometry, key_bits: u32) -> Result<u32> {
    let kpb = keys_per_fetch_burst(geometry, key_bits)?;
    let cap = f64::from(cfg.key_buffer_capacity);
    if kpb > cap {
        return Err(Error::Config(format!(
            "a fetch burst carries {kpb} keys but the key buffer holds {}",
            cfg.key_buffer_capacity
        )));
    }
    let burst = libm::ceil(kpb) as u32;
    Ok(cfg.key_buffer_capacity.saturating_sub(burst).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coalesce {
    Fresh,
    /// Same key as the stream position `of`, still in the window.
    Duplicate { of: u64 },
}

/// Sliding window over the last `capacity` stream positions.
#[derive(Debug, Clone)]
pub struct CoalesceWindow {
    capacity: usize,
    recent: VecDeque<(u64, u64)>,
}

impl CoalesceWindow {
    pub fn new(capacity: u32) -> Self {
        Self {
            capacity: capacity as usize,
            recent: VecDeque::with_capacity(capacity as usize),
        }
    }

    /// Classify the key at stream position `position`, then slide the
    /// window over it.
    pub fn push(&mut self, code: u64, position: u64) -> Coalesce {
        let hit = self
            .recent
            .iter()
            .rev()
            .find(|(c, _)| *c == code)
            .map(|&(_, p)| Coalesce::Duplicate { of: p })
            .unwrap_or(Coalesce::Fresh);
        if self.capacity > 0 {
            if self.recent.len() == self.capacity {
                self.recent.pop_front();
            }
            self.recent.push_back((code, position));
        }
        hit
    }
}
