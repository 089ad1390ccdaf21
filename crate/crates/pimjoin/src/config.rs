//! Flat TOML configuration files.
//!
//! Every key is optional and overrides the built-in default. Keys are the
//! field names of [`SimConfig`] with their section dropped, e.g. `t_cmp = 2`
//! or `rows_per_subarray = 256`. Unknown keys are rejected.

use std::path::Path;

use pimjoin_core::SimConfig;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "PIMJOIN_CONFIG";

macro_rules! flat_config {
    ($($key:ident : $ty:ty => $($path:ident).+;)*) => {
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct FlatConfig {
            $(
                #[serde(skip_serializing_if = "Option::is_none")]
                pub $key: Option<$ty>,
            )*
        }

        impl FlatConfig {
            /// Overlay the keys that are set onto `cfg`.
            pub fn apply(&self, cfg: &mut SimConfig) {
                $(if let Some(v) = self.$key {
                    cfg.$($path).+ = v;
                })*
            }

            /// Every key, as resolved in `cfg`.
            pub fn resolved(cfg: &SimConfig) -> Self {
                Self {
                    $($key: Some(cfg.$($path).+),)*
                }
            }
        }
    };
}

flat_config! {
    channels: u32 => geometry.channels;
    dimms_per_channel: u32 => geometry.dimms_per_channel;
    ranks_per_dimm: u32 => geometry.ranks_per_dimm;
    chips_per_rank: u32 => geometry.chips_per_rank;
    pim_chips_per_rank: u32 => geometry.pim_chips_per_rank;
    banks_per_chip: u32 => geometry.banks_per_chip;
    subarrays_per_bank: u32 => geometry.subarrays_per_bank;
    rows_per_subarray: u32 => geometry.rows_per_subarray;
    columns_per_row: u32 => geometry.columns_per_row;
    chip_io_width: u32 => geometry.chip_io_width;
    burst_length: u32 => geometry.burst_length;
    clock_period_ps: u32 => timing.clock_period_ps;
    t_rcd: u32 => timing.t_rcd;
    t_rp: u32 => timing.t_rp;
    t_cas: u32 => timing.t_cas;
    t_cmp: u32 => timing.t_cmp;
    burst_cycles: u32 => timing.burst_cycles;
    host_transfer_cycles: u32 => timing.host_transfer_cycles;
    entry_bits: u32 => layout.entry_bits;
    value_bits: u32 => layout.value_bits;
    max_bucket_capacity: u32 => layout.max_bucket_capacity;
    bucket_headroom_pct: u32 => layout.bucket_headroom_pct;
    key_buffer_capacity: u32 => rlu.key_buffer_capacity;
    coalesce_window: u32 => rlu.coalesce_window;
    cpu_filter: bool => rlu.cpu_filter;
    ranks: u32 => ranks;
    host_expand_cycles_per_row: u32 => host_expand_cycles_per_row;
}

impl FlatConfig {
    pub fn parse(text: &str) -> AppResult<Self> {
        toml::from_str(text).map_err(|e| AppError::Usage(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }
}

/// Defaults, then the config file, then `overrides`; validated.
pub fn resolve(path: Option<&Path>, overrides: &FlatConfig) -> AppResult<SimConfig> {
    let mut cfg = SimConfig::new();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Usage(format!("config {}: {e}", path.display())))?;
        FlatConfig::parse(&text)?.apply(&mut cfg);
    }
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_of_resolved_defaults() {
        let cfg = SimConfig::new();
        let text = FlatConfig::resolved(&cfg).to_toml();
        assert!(text.contains("t_cmp = 0"));
        let mut back = SimConfig::default();
        FlatConfig::parse(&text).unwrap().apply(&mut back);
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_overrides_only_its_keys() {
        let mut cfg = SimConfig::new();
        FlatConfig::parse("t_cmp = 3\nranks = 2\n").unwrap().apply(&mut cfg);
        assert_eq!(cfg.timing.t_cmp, 3);
        assert_eq!(cfg.ranks, 2);
        assert_eq!(cfg.timing.t_rcd, SimConfig::new().timing.t_rcd);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(FlatConfig::parse("tcmp = 1"), Err(AppError::Usage(_))));
    }
}
