//! Memory hierarchy, address mapping, open-row state and DRAM cost primitives.

use alloc::collections::BTreeMap;
use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the simulated memory system.
///
/// `columns_per_row` counts columns of one chip's row buffer; each column is
/// `chip_io_width` bits wide, so a subarray row holds
/// `columns_per_row * chip_io_width` bits per chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemoryGeometry {
    pub channels: u32,
    pub dimms_per_channel: u32,
    pub ranks_per_dimm: u32,
    /// DCR: chips per rank, including the PIM chip.
    pub chips_per_rank: u32,
    pub pim_chips_per_rank: u32,
    pub banks_per_chip: u32,
    pub subarrays_per_bank: u32,
    pub rows_per_subarray: u32,
    pub columns_per_row: u32,
    pub chip_io_width: u32,
    pub burst_length: u32,
}

impl Default for MemoryGeometry {
    /// 8 channels of DDR4 with 2 DIMMs each, x8 chips, 16 chips per rank,
    /// 65536 rows of 1024 columns per bank.
    fn default() -> Self {
        Self {
            channels: 8,
            dimms_per_channel: 2,
            ranks_per_dimm: 1,
            chips_per_rank: 16,
            pim_chips_per_rank: 1,
            banks_per_chip: 16,
            subarrays_per_bank: 128,
            rows_per_subarray: 512,
            columns_per_row: 1024,
            chip_io_width: 8,
            burst_length: 8,
        }
    }
}

impl MemoryGeometry {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("channels", self.channels),
            ("dimms_per_channel", self.dimms_per_channel),
            ("ranks_per_dimm", self.ranks_per_dimm),
            ("chips_per_rank", self.chips_per_rank),
            ("banks_per_chip", self.banks_per_chip),
            ("subarrays_per_bank", self.subarrays_per_bank),
            ("rows_per_subarray", self.rows_per_subarray),
            ("columns_per_row", self.columns_per_row),
            ("chip_io_width", self.chip_io_width),
            ("burst_length", self.burst_length),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.pim_chips_per_rank != 1 {
            return Err(Error::Config(format!(
                "pim_chips_per_rank must be 1, got {}",
                self.pim_chips_per_rank
            )));
        }
        if self.chips_per_rank < 2 {
            return Err(Error::Config(
                "chips_per_rank must leave at least one regular chip".into(),
            ));
        }
        Ok(())
    }

    /// Bits latched by one chip's subarray row buffer.
    pub fn row_buffer_bits(&self) -> u64 {
        u64::from(self.columns_per_row) * u64::from(self.chip_io_width)
    }

    pub fn row_buffer_bytes(&self) -> u64 {
        self.row_buffer_bits() / 8
    }

    /// Chips per rank that hold ordinary data (the fact-key column).
    pub fn data_chips(&self) -> u32 {
        self.chips_per_rank - self.pim_chips_per_rank
    }

    pub fn rows_per_bank(&self) -> u64 {
        u64::from(self.subarrays_per_bank) * u64::from(self.rows_per_subarray)
    }

    /// Rows available in one chip; also the bucket capacity of a PIM chip.
    pub fn rows_per_chip(&self) -> u64 {
        u64::from(self.banks_per_chip) * self.rows_per_bank()
    }

    /// Bits delivered by one chip in one burst.
    pub fn chip_burst_bits(&self) -> u64 {
        u64::from(self.chip_io_width) * u64::from(self.burst_length)
    }

    pub fn total_ranks(&self) -> u32 {
        self.channels * self.dimms_per_channel * self.ranks_per_dimm
    }

    /// Position of the `index`-th rank. Ranks fill a DIMM first, then the
    /// DIMMs of a channel, then channels.
    pub fn rank_position(&self, index: u32) -> Result<RankPosition> {
        if index >= self.total_ranks() {
            return Err(Error::capacity(
                format!("rank index {index}"),
                u64::from(self.total_ranks()),
            ));
        }
        let rank = index % self.ranks_per_dimm;
        let rest = index / self.ranks_per_dimm;
        Ok(RankPosition {
            channel: rest / self.dimms_per_channel,
            dimm: rest % self.dimms_per_channel,
            rank,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct RankPosition {
    pub channel: u32,
    pub dimm: u32,
    pub rank: u32,
}

/// DRAM timing in memory-clock cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimingParams {
    pub clock_period_ps: u32,
    pub t_rcd: u32,
    pub t_rp: u32,
    pub t_cas: u32,
    /// Comparator delay added to every PIM search.
    pub t_cmp: u32,
    pub burst_cycles: u32,
    pub host_transfer_cycles: u32,
}

impl Default for TimingParams {
    /// DDR4-3200 22-22-22.
    fn default() -> Self {
        Self {
            clock_period_ps: 1250,
            t_rcd: 22,
            t_rp: 22,
            t_cas: 22,
            t_cmp: 0,
            burst_cycles: 4,
            host_transfer_cycles: 0,
        }
    }
}

impl TimingParams {
    pub const MAX_T_CMP: u32 = 4;

    pub fn validate(&self) -> Result<()> {
        if self.t_cmp > Self::MAX_T_CMP {
            return Err(Error::Config(format!(
                "t_cmp must be within 0..={}, got {}",
                Self::MAX_T_CMP,
                self.t_cmp
            )));
        }
        if self.clock_period_ps == 0 {
            return Err(Error::Config("clock_period_ps must be positive".into()));
        }
        Ok(())
    }

    /// Cost of one host-visible burst (array burst plus channel transfer).
    pub fn host_burst(&self) -> u64 {
        u64::from(self.burst_cycles) + u64::from(self.host_transfer_cycles)
    }

    pub fn cycles_to_seconds(&self, cycles: u64) -> f64 {
        cycles as f64 * f64::from(self.clock_period_ps) * 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum ChipSelect {
    /// The chips holding the fact-key column.
    #[default]
    Regular,
    /// The comparator-equipped chip holding hash buckets.
    Pim,
}

/// A row (plus byte offset inside the per-chip row buffer) in the simulated
/// memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Location {
    pub chip: ChipSelect,
    pub channel: u32,
    pub dimm: u32,
    pub rank: u32,
    pub bank: u32,
    pub subarray: u32,
    pub row: u32,
    pub column_offset: u32,
}

impl Location {
    pub fn validate(&self, geometry: &MemoryGeometry) -> Result<()> {
        let checks = [
            ("channel", self.channel, geometry.channels),
            ("dimm", self.dimm, geometry.dimms_per_channel),
            ("rank", self.rank, geometry.ranks_per_dimm),
            ("bank", self.bank, geometry.banks_per_chip),
            ("subarray", self.subarray, geometry.subarrays_per_bank),
            ("row", self.row, geometry.rows_per_subarray),
        ];
        for (name, value, bound) in checks {
            if value >= bound {
                return Err(Error::capacity(format!("{name} {value}"), u64::from(bound)));
            }
        }
        if u64::from(self.column_offset) >= geometry.row_buffer_bytes() {
            return Err(Error::capacity(
                format!("column offset {}", self.column_offset),
                geometry.row_buffer_bytes(),
            ));
        }
        Ok(())
    }

    fn subarray_key(&self) -> SubarrayKey {
        (
            self.chip,
            self.channel,
            self.dimm,
            self.rank,
            self.bank,
            self.subarray,
        )
    }

    /// Linear byte address. Field order, most significant first: chip
    /// select, channel, dimm, rank, bank, subarray, row, byte in row.
    pub fn to_address(&self, geometry: &MemoryGeometry) -> u64 {
        let chip = match self.chip {
            ChipSelect::Regular => 0,
            ChipSelect::Pim => 1,
        };
        let mut addr = chip;
        addr = addr * u64::from(geometry.channels) + u64::from(self.channel);
        addr = addr * u64::from(geometry.dimms_per_channel) + u64::from(self.dimm);
        addr = addr * u64::from(geometry.ranks_per_dimm) + u64::from(self.rank);
        addr = addr * u64::from(geometry.banks_per_chip) + u64::from(self.bank);
        addr = addr * u64::from(geometry.subarrays_per_bank) + u64::from(self.subarray);
        addr = addr * u64::from(geometry.rows_per_subarray) + u64::from(self.row);
        addr * geometry.row_buffer_bytes() + u64::from(self.column_offset)
    }

    pub fn from_address(addr: u64, geometry: &MemoryGeometry) -> Result<Self> {
        let mut rest = addr;
        let mut take = |bound: u64| {
            let v = rest % bound;
            rest /= bound;
            v as u32
        };
        let column_offset = take(geometry.row_buffer_bytes());
        let row = take(u64::from(geometry.rows_per_subarray));
        let subarray = take(u64::from(geometry.subarrays_per_bank));
        let bank = take(u64::from(geometry.banks_per_chip));
        let rank = take(u64::from(geometry.ranks_per_dimm));
        let dimm = take(u64::from(geometry.dimms_per_channel));
        let channel = take(u64::from(geometry.channels));
        let chip = match rest {
            0 => ChipSelect::Regular,
            1 => ChipSelect::Pim,
            _ => return Err(Error::capacity(format!("address {addr:#x}"), 2)),
        };
        Ok(Self {
            chip,
            channel,
            dimm,
            rank,
            bank,
            subarray,
            row,
            column_offset,
        })
    }
}

/// Stripe a chip-local row index: consecutive indices go to consecutive
/// banks first, then subarrays, then rows.
pub fn stripe_row(
    index: u64,
    chip: ChipSelect,
    rank: RankPosition,
    geometry: &MemoryGeometry,
) -> Result<Location> {
    let limit = geometry.rows_per_chip();
    if index >= limit {
        return Err(Error::capacity(format!("row index {index}"), limit));
    }
    let banks = u64::from(geometry.banks_per_chip);
    let subarrays = u64::from(geometry.subarrays_per_bank);
    let bank = index % banks;
    let rest = index / banks;
    Ok(Location {
        chip,
        channel: rank.channel,
        dimm: rank.dimm,
        rank: rank.rank,
        bank: bank as u32,
        subarray: (rest % subarrays) as u32,
        row: (rest / subarrays) as u32,
        column_offset: 0,
    })
}

/// Inverse of [`stripe_row`] (ignores rank and column fields).
pub fn unstripe_row(loc: &Location, geometry: &MemoryGeometry) -> u64 {
    let banks = u64::from(geometry.banks_per_chip);
    let subarrays = u64::from(geometry.subarrays_per_bank);
    (u64::from(loc.row) * subarrays + u64::from(loc.subarray)) * banks + u64::from(loc.bank)
}

/// Location of a hash bucket on the PIM chip of the first rank.
pub fn map_bucket_to_location(bucket_id: u64, geometry: &MemoryGeometry) -> Result<Location> {
    stripe_row(
        bucket_id,
        ChipSelect::Pim,
        RankPosition::default(),
        geometry,
    )
}

pub fn location_to_bucket(loc: &Location, geometry: &MemoryGeometry) -> u64 {
    unstripe_row(loc, geometry)
}

/// How a row access was served.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowOutcome {
    Hit,
    /// No row open in the subarray.
    Cold,
    /// A different row was open and had to be precharged.
    Conflict,
}

impl RowOutcome {
    pub fn cost(self, timing: &TimingParams) -> u64 {
        let (rp, rcd, cas) = (
            u64::from(timing.t_rp),
            u64::from(timing.t_rcd),
            u64::from(timing.t_cas),
        );
        match self {
            RowOutcome::Hit => cas,
            RowOutcome::Cold => rcd + cas,
            RowOutcome::Conflict => rp + rcd + cas,
        }
    }

    pub fn is_activation(self) -> bool {
        !matches!(self, RowOutcome::Hit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowAccess {
    pub outcome: RowOutcome,
    pub cycles: u64,
}

type SubarrayKey = (ChipSelect, u32, u32, u32, u32, u32);

/// Open-page row-buffer state: one open row per subarray, per chip kind.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BankState {
    open_rows: BTreeMap<SubarrayKey, u32>,
    /// Sum of all access costs charged so far.
    pub cycle_now: u64,
}

impl BankState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open_row(&self, loc: &Location) -> Option<u32> {
        self.open_rows.get(&loc.subarray_key()).copied()
    }

    pub fn access_row(&mut self, loc: &Location, timing: &TimingParams) -> RowAccess {
        let outcome = match self.open_rows.insert(loc.subarray_key(), loc.row) {
            Some(open) if open == loc.row => RowOutcome::Hit,
            Some(_) => RowOutcome::Conflict,
            None => RowOutcome::Cold,
        };
        let cycles = outcome.cost(timing);
        self.cycle_now += cycles;
        RowAccess { outcome, cycles }
    }

    /// Close every row.
    pub fn precharge_all(&mut self) {
        self.open_rows.clear();
    }
}

/// Cycles to move `words` words of `word_bits` bits between the host and
/// `chips` chips that burst in parallel.
pub fn burst_transfer_cycles(
    words: u64,
    word_bits: u32,
    chips: u32,
    geometry: &MemoryGeometry,
    timing: &TimingParams,
) -> Result<u64> {
    Ok(burst_count(words, word_bits, chips, geometry)? * timing.host_burst())
}

/// Number of bursts needed for `words` words spread over `chips` chips.
pub fn burst_count(
    words: u64,
    word_bits: u32,
    chips: u32,
    geometry: &MemoryGeometry,
) -> Result<u64> {
    if word_bits == 0 {
        return Err(Error::Config("word width must be positive".into()));
    }
    if chips == 0 {
        return Err(Error::Config("burst needs at least one chip".into()));
    }
    let burst_bits = geometry.chip_burst_bits() * u64::from(chips);
    let word_bits = u64::from(word_bits);
    if word_bits <= burst_bits {
        let per_burst = burst_bits / word_bits;
        Ok(words.div_ceil(per_burst))
    } else {
        Ok(words * word_bits.div_ceil(burst_bits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn small() -> MemoryGeometry {
        MemoryGeometry {
            banks_per_chip: 4,
            subarrays_per_bank: 8,
            rows_per_subarray: 32,
            ..MemoryGeometry::default()
        }
    }

    #[test]
    fn default_profile_is_valid() {
        let g = MemoryGeometry::default();
        g.validate().unwrap();
        assert!(g.rows_per_bank() <= 65536);
        assert_eq!(g.row_buffer_bits(), 8192);
        TimingParams::default().validate().unwrap();
    }

    #[test]
    fn bucket_zero_maps_to_origin() {
        let loc = map_bucket_to_location(0, &MemoryGeometry::default()).unwrap();
        assert_eq!((loc.bank, loc.subarray, loc.row), (0, 0, 0));
        assert_eq!(loc.chip, ChipSelect::Pim);
    }

    #[test]
    fn buckets_stripe_banks_first() {
        let g = small();
        let loc = map_bucket_to_location(1, &g).unwrap();
        assert_eq!((loc.bank, loc.subarray, loc.row), (1, 0, 0));
        let loc = map_bucket_to_location(4, &g).unwrap();
        assert_eq!((loc.bank, loc.subarray, loc.row), (0, 1, 0));
        let loc = map_bucket_to_location(32, &g).unwrap();
        assert_eq!((loc.bank, loc.subarray, loc.row), (0, 0, 1));
    }

    #[test]
    fn mapping_is_injective_over_first_1024_buckets() {
        let g = small();
        let locs: BTreeSet<_> = (0..1024)
            .map(|b| map_bucket_to_location(b, &g).unwrap())
            .collect();
        assert_eq!(locs.len(), 1024);
        for b in 0..1024 {
            let loc = map_bucket_to_location(b, &g).unwrap();
            loc.validate(&g).unwrap();
            assert_eq!(location_to_bucket(&loc, &g), b);
        }
    }

    #[test]
    fn out_of_range_bucket_names_limit() {
        let g = small();
        let err = map_bucket_to_location(g.rows_per_chip(), &g).unwrap_err();
        assert_eq!(
            err,
            Error::Capacity {
                what: "row index 1024".into(),
                limit: 1024
            }
        );
    }

    #[test]
    fn row_hit_cold_and_conflict_costs() {
        let t = TimingParams::default();
        let g = small();
        let mut state = BankState::new();
        let mut loc = map_bucket_to_location(0, &g).unwrap();
        loc.row = 9;
        assert_eq!(state.access_row(&loc, &t).cycles, 44);
        assert_eq!(state.access_row(&loc, &t).cycles, 22);
        loc.row = 5;
        let acc = state.access_row(&loc, &t);
        assert_eq!(acc.outcome, RowOutcome::Conflict);
        assert_eq!(acc.cycles, 66);
        assert_eq!(state.cycle_now, 44 + 22 + 66);
    }

    #[test]
    fn chips_keep_independent_row_state() {
        let t = TimingParams::default();
        let mut state = BankState::new();
        let pim = Location {
            chip: ChipSelect::Pim,
            row: 3,
            ..Location::default()
        };
        let regular = Location {
            chip: ChipSelect::Regular,
            row: 7,
            ..Location::default()
        };
        state.access_row(&pim, &t);
        state.access_row(&regular, &t);
        assert_eq!(state.access_row(&pim, &t).outcome, RowOutcome::Hit);
    }

    #[test]
    fn burst_edge_cases() {
        let g = MemoryGeometry::default();
        let t = TimingParams::default();
        assert_eq!(burst_transfer_cycles(0, 32, 1, &g, &t).unwrap(), 0);
        // 64-bit chip burst carries two 32-bit words
        assert_eq!(burst_transfer_cycles(2, 32, 1, &g, &t).unwrap(), 4);
        assert_eq!(burst_transfer_cycles(3, 32, 1, &g, &t).unwrap(), 8);
        assert_eq!(burst_transfer_cycles(1, 128, 1, &g, &t).unwrap(), 8);
        assert!(matches!(
            burst_transfer_cycles(1, 0, 1, &g, &t),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn burst_matches_one_at_a_time_accumulation() {
        use rand::{Rng, SeedableRng};
        let g = MemoryGeometry::default();
        let t = TimingParams {
            host_transfer_cycles: 3,
            ..TimingParams::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let words: u64 = rng.gen_range(0..5000);
            let word_bits: u32 = rng.gen_range(1..=200);
            let chips: u32 = rng.gen_range(1..=16);
            // oracle: fill bursts bit by bit, never splitting a word that fits
            let burst_bits = 64 * u64::from(chips);
            let mut cycles = 0u64;
            let mut room = 0u64;
            for _ in 0..words {
                let wb = u64::from(word_bits);
                if wb > burst_bits {
                    let mut left = wb;
                    while left > 0 {
                        cycles += 7;
                        left = left.saturating_sub(burst_bits);
                    }
                    room = 0;
                    continue;
                }
                if room < wb {
                    cycles += 7;
                    room = burst_bits;
                }
                room -= wb;
            }
            assert_eq!(
                burst_transfer_cycles(words, word_bits, chips, &g, &t).unwrap(),
                cycles,
                "words={words} bits={word_bits} chips={chips}"
            );
        }
    }

    #[test]
    fn address_round_trip_and_field_layout() {
        let g = MemoryGeometry::default();
        let loc = Location {
            chip: ChipSelect::Pim,
            channel: 3,
            dimm: 1,
            rank: 0,
            bank: 7,
            subarray: 100,
            row: 511,
            column_offset: 1023,
        };
        let addr = loc.to_address(&g);
        assert_eq!(Location::from_address(addr, &g).unwrap(), loc);
        let origin = Location {
            row: 1,
            ..Location::default()
        };
        assert_eq!(origin.to_address(&g), 1024);
    }

    proptest! {
        #[test]
        fn access_costs_match_independent_classification(
            accesses in proptest::collection::vec((0u32..3, 0u32..2, 0u32..4), 0..200)
        ) {
            let t = TimingParams { t_rcd: 11, t_rp: 13, t_cas: 5, ..TimingParams::default() };
            let mut state = BankState::new();
            let mut total = 0;
            for &(bank, sub, row) in &accesses {
                let loc = Location { bank, subarray: sub, row, ..Location::default() };
                total += state.access_row(&loc, &t).cycles;
            }
            // oracle: replay with a plain vector of (bank, subarray, row)
            let mut open: Vec<(u32, u32, u32)> = Vec::new();
            let (mut hits, mut cold, mut conflicts) = (0u64, 0u64, 0u64);
            for &(bank, sub, row) in &accesses {
                match open.iter().position(|&(b, s, _)| b == bank && s == sub) {
                    Some(i) if open[i].2 == row => hits += 1,
                    Some(i) => { conflicts += 1; open[i].2 = row; }
                    None => { cold += 1; open.push((bank, sub, row)); }
                }
            }
            prop_assert_eq!(total, hits * 5 + cold * (11 + 5) + conflicts * (13 + 11 + 5));
            prop_assert_eq!(state.cycle_now, total);
        }

        #[test]
        fn increasing_timing_never_decreases_cost(
            base in (0u32..40, 0u32..40, 0u32..40, 0u32..8, 0u32..8),
            bump in 0usize..5,
            outcome in 0usize..3,
            words in 0u64..1000,
        ) {
            let t = TimingParams {
                t_rcd: base.0, t_rp: base.1, t_cas: base.2,
                burst_cycles: base.3, host_transfer_cycles: base.4,
                ..TimingParams::default()
            };
            let mut t2 = t;
            match bump {
                0 => t2.t_rcd += 1,
                1 => t2.t_rp += 1,
                2 => t2.t_cas += 1,
                3 => t2.burst_cycles += 1,
                _ => t2.host_transfer_cycles += 1,
            }
            let o = [RowOutcome::Hit, RowOutcome::Cold, RowOutcome::Conflict][outcome];
            prop_assert!(o.cost(&t2) >= o.cost(&t));
            let g = MemoryGeometry::default();
            prop_assert!(
                burst_transfer_cycles(words, 32, 1, &g, &t2).unwrap()
                    >= burst_transfer_cycles(words, 32, 1, &g, &t).unwrap()
            );
        }

        #[test]
        fn stripe_round_trip(index in 0u64..(16 * 128 * 512)) {
            let g = MemoryGeometry::default();
            let loc = stripe_row(index, ChipSelect::Regular, RankPosition::default(), &g).unwrap();
            prop_assert_eq!(unstripe_row(&loc, &g), index);
        }
    }
}
