use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashSet;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};

/// How the first candidate code of a value is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeAssignment {
    /// Candidate = order of first appearance; code width is the minimum
    /// that holds every assigned code.
    Sequential,
    /// Candidate = the value itself, at a fixed code width (uncompressed
    /// keys).
    Identity { code_bits: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryParams {
    pub bucket_capacity: u32,
    pub headroom_pct: u32,
    /// Rows available for buckets.
    pub available_rows: u64,
    pub assignment: CodeAssignment,
}

impl DictionaryParams {
    pub fn from_config(cfg: &SimConfig, assignment: CodeAssignment) -> Result<Self> {
        Ok(Self {
            bucket_capacity: cfg.layout.bucket_capacity(&cfg.geometry)?,
            headroom_pct: cfg.layout.bucket_headroom_pct,
            available_rows: cfg.geometry.rows_per_chip() * u64::from(cfg.ranks.max(1)),
            assignment,
        })
    }
}

/// Split a code into (bucket, tag): the low `index_bits` select the bucket
/// row, the rest is stored and compared.
pub fn split_code(code: u64, index_bits: u32) -> (u32, u64) {
    let mask = (1u64 << index_bits) - 1;
    ((code & mask) as u32, code >> index_bits)
}

pub fn bucket_of(code: u64, index_bits: u32) -> u32 {
    split_code(code, index_bits).0
}

pub fn join_code(bucket: u32, tag: u64, index_bits: u32) -> u64 {
    tag << index_bits | u64::from(bucket)
}

/// Index width for `distinct` keys: enough buckets for the keys plus
/// headroom, capped by the rows available.
pub fn size_index_bits(
    distinct: u64,
    bucket_capacity: u32,
    headroom_pct: u32,
    available_rows: u64,
) -> Result<u32> {
    if bucket_capacity == 0 || available_rows == 0 {
        return Err(Error::Config("bucket capacity and rows must be positive".into()));
    }
    let scaled = distinct * u64::from(headroom_pct);
    let needed = scaled.div_ceil(u64::from(bucket_capacity) * 100).max(1);
    let buckets = needed.min(available_rows);
    let mut bits = ceil_log2(buckets);
    if 1u64 << bits > available_rows {
        bits -= 1;
    }
    let capacity = (1u64 << bits) * u64::from(bucket_capacity);
    if distinct > capacity {
        return Err(Error::capacity(
            format!("{distinct} distinct keys"),
            capacity,
        ));
    }
    Ok(bits)
}

fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Smallest width `t` with `2^t - 1 > max_tag`, so the all-ones tag stays
/// free as the empty-slot sentinel.
fn tag_width_for(max_tag: u64) -> u32 {
    64 - (max_tag + 1).leading_zeros()
}

/// Fixed-width value codes, steered so that no bucket overflows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dictionary {
    to_code: BTreeMap<u64, u64>,
    to_value: BTreeMap<u64, u64>,
    code_bits: u32,
    index_bits: u32,
    bucket_capacity: u32,
    remapped: u64,
}

impl Dictionary {
    pub fn build(keys: &[u64], params: &DictionaryParams) -> Result<Self> {
        let mut seen = HashSet::new();
        let distinct: Vec<u64> = keys.iter().copied().filter(|k| seen.insert(*k)).collect();
        let index_bits = size_index_bits(
            distinct.len() as u64,
            params.bucket_capacity,
            params.headroom_pct,
            params.available_rows,
        )?;
        let fixed_bits = match params.assignment {
            CodeAssignment::Sequential => None,
            CodeAssignment::Identity { code_bits } => {
                if code_bits <= index_bits || code_bits > 63 {
                    return Err(Error::Config(format!(
                        "{code_bits}-bit codes leave no tag bits above {index_bits} index bits"
                    )));
                }
                Some(code_bits)
            }
        };
        let buckets = 1usize << index_bits;
        let cap = params.bucket_capacity;
        let mut occupancy = vec![0u32; buckets];
        let mut taken: HashSet<u64> = HashSet::with_capacity(distinct.len());
        let mut to_code = BTreeMap::new();
        let mut to_value = BTreeMap::new();
        let mut remapped = 0;

        // codes with an all-ones tag are reserved for the empty sentinel
        let valid = |code: u64| match fixed_bits {
            None => true,
            Some(bits) => code >> index_bits != (1u64 << (bits - index_bits)) - 1,
        };
        let space = fixed_bits.map(|b| 1u64 << b);

        for (ordinal, &value) in distinct.iter().enumerate() {
            let first = match params.assignment {
                CodeAssignment::Sequential => ordinal as u64,
                CodeAssignment::Identity { .. } => value % space.unwrap_or(u64::MAX),
            };
            let mut code = first;
            let mut steps = 0u64;
            loop {
                let bucket = bucket_of(code, index_bits) as usize;
                if valid(code) && occupancy[bucket] < cap && !taken.contains(&code) {
                    break;
                }
                code += 1;
                if let Some(space) = space {
                    code %= space;
                    steps += 1;
                    if steps >= space {
                        return Err(Error::capacity(
                            "code space exhausted while remapping",
                            space,
                        ));
                    }
                }
            }
            if code != first {
                remapped += 1;
            }
            occupancy[bucket_of(code, index_bits) as usize] += 1;
            taken.insert(code);
            to_code.insert(value, code);
            to_value.insert(code, value);
        }

        let code_bits = match fixed_bits {
            Some(bits) => bits,
            None => {
                let max_tag = to_value.keys().next_back().map_or(0, |&c| c >> index_bits);
                index_bits + tag_width_for(max_tag)
            }
        };
        Ok(Self {
            to_code,
            to_value,
            code_bits,
            index_bits,
            bucket_capacity: cap,
            remapped,
        })
    }

    /// Rebuild from stored (value, code) pairs.
    pub fn from_parts(
        pairs: impl IntoIterator<Item = (u64, u64)>,
        code_bits: u32,
        index_bits: u32,
        bucket_capacity: u32,
    ) -> Result<Self> {
        let mut to_code = BTreeMap::new();
        let mut to_value = BTreeMap::new();
        for (value, code) in pairs {
            if to_code.insert(value, code).is_some() || to_value.insert(code, value).is_some() {
                return Err(Error::Invariant(format!(
                    "dictionary pair ({value}, {code}) is not one-to-one"
                )));
            }
        }
        let dict = Self {
            to_code,
            to_value,
            code_bits,
            index_bits,
            bucket_capacity,
            remapped: 0,
        };
        dict.validate()?;
        Ok(dict)
    }

    pub fn encode(&self, value: u64) -> Option<u64> {
        self.to_code.get(&value).copied()
    }

    pub fn decode(&self, code: u64) -> Option<u64> {
        self.to_value.get(&code).copied()
    }

    /// Code stored for fact keys missing from the dictionary; its tag is the
    /// empty sentinel so it never matches.
    pub fn sentinel(&self) -> u64 {
        (1u64 << self.code_bits) - 1
    }

    pub fn encode_or_sentinel(&self, value: u64) -> u64 {
        self.encode(value).unwrap_or_else(|| self.sentinel())
    }

    pub fn len(&self) -> usize {
        self.to_code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_code.is_empty()
    }

    pub fn code_bits(&self) -> u32 {
        self.code_bits
    }

    pub fn index_bits(&self) -> u32 {
        self.index_bits
    }

    pub fn tag_bits(&self) -> u32 {
        self.code_bits - self.index_bits
    }

    pub fn bucket_count(&self) -> u64 {
        1 << self.index_bits
    }

    pub fn bucket_capacity(&self) -> u32 {
        self.bucket_capacity
    }

    /// Values whose first-choice code was taken or overflowed.
    pub fn remapped(&self) -> u64 {
        self.remapped
    }

    /// (value, code) pairs in value order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.to_code.iter().map(|(&v, &c)| (v, c))
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_code.len() != self.to_value.len() {
            return Err(Error::Invariant("dictionary maps differ in size".into()));
        }
        let sentinel_tag = (1u64 << self.tag_bits()) - 1;
        let mut occupancy = BTreeMap::<u32, u32>::new();
        for (&value, &code) in &self.to_code {
            if self.to_value.get(&code) != Some(&value) {
                return Err(Error::Invariant(format!("value {value} does not round-trip")));
            }
            if code >> self.code_bits != 0 {
                return Err(Error::Invariant(format!(
                    "code {code:#x} exceeds {} bits",
                    self.code_bits
                )));
            }
            let (bucket, tag) = split_code(code, self.index_bits);
            if tag == sentinel_tag {
                return Err(Error::Invariant(format!("code {code:#x} uses the sentinel tag")));
            }
            let n = occupancy.entry(bucket).or_default();
            *n += 1;
            if *n > self.bucket_capacity {
                return Err(Error::Invariant(format!("bucket {bucket} overflows")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(cap: u32, rows: u64, assignment: CodeAssignment) -> DictionaryParams {
        DictionaryParams {
            bucket_capacity: cap,
            headroom_pct: 125,
            available_rows: rows,
            assignment,
        }
    }

    #[test]
    fn small_input_keeps_insertion_codes() {
        let keys: Vec<u64> = (100..110).collect();
        let p = DictionaryParams {
            available_rows: 256,
            ..params(100, 256, CodeAssignment::Sequential)
        };
        let d = Dictionary::build(&keys, &p).unwrap();
        for (i, k) in keys.iter().enumerate() {
            assert_eq!(d.encode(*k), Some(i as u64));
        }
        assert_eq!(d.remapped(), 0);
        d.validate().unwrap();
    }

    #[test]
    fn overflowing_bucket_moves_third_key_by_one() {
        // identity codes 0, 4 and 8 all land in bucket 0 of 4 buckets
        let p = DictionaryParams {
            bucket_capacity: 2,
            headroom_pct: 100,
            available_rows: 4,
            assignment: CodeAssignment::Identity { code_bits: 8 },
        };
        let mut keys = vec![0, 4, 8];
        keys.extend([1, 2]); // 5 keys at capacity 2 -> 3 buckets -> 2 index bits
        let d = Dictionary::build(&keys, &p).unwrap();
        assert_eq!(d.index_bits(), 2);
        assert_eq!(d.encode(0), Some(0));
        assert_eq!(d.encode(4), Some(4));
        assert_eq!(d.encode(8), Some(9));
        assert_eq!(d.encode(1), Some(1));
        // bucket 1 now holds codes 9 and 1, so key 2 keeps code 2
        assert_eq!(d.encode(2), Some(2));
        assert_eq!(d.remapped(), 1);
    }

    #[test]
    fn bit_slice_of_code() {
        assert_eq!(split_code(0x1234, 8), (0x34, 0x12));
        assert_eq!(split_code(0, 8), (0, 0));
        assert_eq!(join_code(0x34, 0x12, 8), 0x1234);
    }

    #[test]
    fn uniform_codes_spread_evenly() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let bits = 8;
        let draws = 1_000_000u64;
        let mut hist = vec![0u64; 1 << bits];
        for _ in 0..draws {
            hist[bucket_of(rng.gen::<u32>() as u64, bits) as usize] += 1;
        }
        let p = 1.0 / f64::from(1u32 << bits);
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for &h in &hist {
            assert!((h as f64 - mean).abs() <= 4.0 * sigma, "{h} vs {mean}");
        }
    }

    #[test]
    fn sizing_rule() {
        // ceil(300 * 1.25 / 128) = 3 buckets -> 2 bits
        assert_eq!(size_index_bits(300, 128, 125, 1 << 20).unwrap(), 2);
        assert_eq!(size_index_bits(1, 128, 125, 1 << 20).unwrap(), 0);
        assert_eq!(size_index_bits(0, 128, 125, 1 << 20).unwrap(), 0);
        // capped by available rows
        assert_eq!(size_index_bits(600, 10, 125, 100).unwrap(), 6);
        assert!(matches!(
            size_index_bits(700, 10, 125, 100),
            Err(Error::Capacity { limit: 640, .. })
        ));
    }

    #[test]
    fn compact_width_reserves_sentinel_tag() {
        // 4 keys, one bucket: tags 0..=3 need 3 bits since 0b11 must stay free
        let d = Dictionary::build(&[5, 6, 7, 8], &params(8, 16, CodeAssignment::Sequential))
            .unwrap();
        assert_eq!(d.index_bits(), 0);
        assert_eq!(d.code_bits(), 3);
        assert_eq!(d.sentinel(), 7);
        assert_eq!(d.decode(d.sentinel()), None);
    }

    #[test]
    fn identity_skips_sentinel_codes() {
        let p = DictionaryParams {
            bucket_capacity: 4,
            headroom_pct: 100,
            available_rows: 1,
            assignment: CodeAssignment::Identity { code_bits: 4 },
        };
        let d = Dictionary::build(&[15, 14], &p).unwrap();
        // 15 is the all-ones code; wraps to 0
        assert_eq!(d.encode(15), Some(0));
        assert_eq!(d.encode(14), Some(14));
        d.validate().unwrap();
    }

    #[test]
    fn too_many_keys_is_capacity_error() {
        let keys: Vec<u64> = (0..100).collect();
        let err = Dictionary::build(&keys, &params(4, 16, CodeAssignment::Sequential)).unwrap_err();
        assert!(matches!(err, Error::Capacity { limit: 64, .. }));
    }

    proptest! {
        #[test]
        fn occupancy_never_exceeds_capacity(
            keys in proptest::collection::vec(0u64..5000, 0..600),
            cap in 1u32..20,
            identity in any::<bool>(),
        ) {
            let assignment = if identity {
                CodeAssignment::Identity { code_bits: 24 }
            } else {
                CodeAssignment::Sequential
            };
            let p = DictionaryParams {
                bucket_capacity: cap,
                headroom_pct: 125,
                available_rows: 1 << 12,
                assignment,
            };
            let d = Dictionary::build(&keys, &p).unwrap();
            let mut counts = BTreeMap::<u32, u32>::new();
            for (v, c) in d.iter() {
                *counts.entry(bucket_of(c, d.index_bits())).or_default() += 1;
                prop_assert_eq!(d.decode(c), Some(v));
                prop_assert!(c < d.sentinel());
            }
            prop_assert!(counts.values().all(|&n| n <= cap));
            let distinct: HashSet<u64> = keys.iter().copied().collect();
            prop_assert_eq!(d.len(), distinct.len());
            d.validate().unwrap();
        }
    }
}
