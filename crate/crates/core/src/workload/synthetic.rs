use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::zipf::Zipf;
use super::{JoinSpec, Table};
use crate::error::{Error, Result};

/// Seeded bijection on `u32`; distinct inputs give distinct keys.
pub fn mix32(x: u32, seed: u64) -> u32 {
    let mut x = x ^ seed as u32;
    x = x.wrapping_mul(0x9e37_79b1);
    x ^= x >> 16;
    x = x.wrapping_mul(0x85eb_ca6b);
    x ^= x >> 13;
    x = x.wrapping_add((seed >> 32) as u32);
    x ^= x >> 16;
    x
}

pub(super) fn joins() -> Vec<JoinSpec> {
    vec![JoinSpec::new("r_s", ("r", "key"), ("s", "key"))]
}

/// `R` with unique 32-bit keys and `S` with `multiplier * |R|` keys whose
/// ranks follow Zipf(s): rank `k` maps to the `k`-th key of `R`.
pub fn gen_synthetic_pair(
    size_r: u64,
    multiplier: u32,
    s: f64,
    seed: u64,
    miss_rate: f64,
) -> Result<(Table, Table)> {
    if size_r > 1 << 32 {
        return Err(Error::Domain("|R| exceeds the 32-bit key space".into()));
    }
    if size_r == 0 {
        return Err(Error::Domain("|R| must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_keys: Vec<u64> = (0..size_r).map(|i| u64::from(mix32(i as u32, seed))).collect();
    let r_values: Vec<u64> = (0..size_r).map(|_| u64::from(rng.gen::<u32>())).collect();

    let zipf = Zipf::new(size_r, s)?;
    let size_s = size_r * u64::from(multiplier);
    let spare = (1u64 << 32) - size_r;
    let mut s_keys = Vec::with_capacity(size_s as usize);
    for _ in 0..size_s {
        if spare > 0 && miss_rate > 0.0 && rng.gen::<f64>() < miss_rate {
            let j = size_r + rng.gen_range(0..spare);
            s_keys.push(u64::from(mix32(j as u32, seed)));
        } else {
            s_keys.push(r_keys[(zipf.sample(&mut rng) - 1) as usize]);
        }
    }
    let s_values: Vec<u64> = (0..size_s).map(|_| u64::from(rng.gen::<u32>())).collect();
    Ok((
        Table::new("r", 8)
            .with_column("key", r_keys)
            .with_column("value", r_values),
        Table::new("s", 8)
            .with_column("key", s_keys)
            .with_column("value", s_values),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hashbrown::HashSet;

    #[test]
    fn mix_is_injective_on_a_range() {
        let keys: HashSet<u32> = (0..200_000).map(|i| mix32(i, 42)).collect();
        assert_eq!(keys.len(), 200_000);
    }

    #[test]
    fn sizes_and_membership() {
        let (r, s) = gen_synthetic_pair(1000, 4, 1.5, 8, 0.0).unwrap();
        assert_eq!(r.len(), 1000);
        assert_eq!(s.len(), 4000);
        let rk: HashSet<u64> = r.column("key").unwrap().iter().copied().collect();
        assert_eq!(rk.len(), 1000);
        assert!(s.column("key").unwrap().iter().all(|k| rk.contains(k)));
    }

    #[test]
    fn misses_are_outside_r() {
        let (r, s) = gen_synthetic_pair(1000, 2, 0.0, 8, 0.5).unwrap();
        let rk: HashSet<u64> = r.column("key").unwrap().iter().copied().collect();
        let absent = s.column("key").unwrap().iter().filter(|k| !rk.contains(*k)).count();
        assert!((800..1200).contains(&absent), "{absent}");
    }

    #[test]
    fn oversized_r_is_domain_error() {
        assert!(matches!(
            gen_synthetic_pair((1 << 32) + 1, 1, 0.0, 0, 0.0),
            Err(Error::Domain(_))
        ));
    }
}
