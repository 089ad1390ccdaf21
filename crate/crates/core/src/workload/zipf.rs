use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Zipf(s) over ranks `1..=n`, sampled by inverse CDF over a cumulative
/// table.
#[derive(Debug, Clone)]
pub struct Zipf {
    cdf: Vec<f64>,
}

impl Zipf {
    pub fn new(domain_size: u64, s: f64) -> Result<Self> {
        if domain_size == 0 {
            return Err(Error::Domain("zipf domain must be non-empty".into()));
        }
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::Domain("zipf exponent must be finite and >= 0".into()));
        }
        let mut cdf = Vec::with_capacity(domain_size as usize);
        let mut acc = 0.0;
        for k in 1..=domain_size {
            acc += weight(k, s);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Ok(Self { cdf })
    }

    pub fn domain_size(&self) -> u64 {
        self.cdf.len() as u64
    }

    /// Rank for a uniform draw `u` in `[0, 1)`.
    pub fn rank_for(&self, u: f64) -> u64 {
        let i = self.cdf.partition_point(|&c| c <= u);
        i.min(self.cdf.len() - 1) as u64 + 1
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        self.rank_for(rng.gen::<f64>())
    }
}

fn weight(k: u64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        1.0 / libm::pow(k as f64, s)
    }
}

/// Generalized harmonic number `H(n, s)`.
pub fn harmonic(n: u64, s: f64) -> f64 {
    (1..=n).map(|k| weight(k, s)).sum()
}

/// `n` ranks in `1..=domain_size` drawn from Zipf(s).
pub fn gen_zipf_keys(n: u64, s: f64, domain_size: u64, seed: u64) -> Result<Vec<u64>> {
    let zipf = Zipf::new(domain_size, s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| zipf.sample(&mut rng)).collect())
}
