//! The shared public coin: level sets `S_l^z` and the bucket-to-level rule.
//!
//! Membership of coordinate `j` in `S_l^z` is a keyed hash of
//! `(master_seed, z, l, j)` compared against `2^64 * 2^-l`. Each `(z, l)`
//! pair gets its own key, so levels are independent samples rather than
//! nested subsets.

use crate::error::{Error, Result};
use crate::hashing::{absorb, keyed_hash};

/// `ceil(log2 x)` for `x >= 1` (0 for `x <= 1`).
pub fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

#[derive(Debug, Clone)]
pub struct PublicCoin {
    master_seed: u64,
    r: usize,
    m: usize,
    l_max: u32,
    /// Per-(z, l) hash keys, row-major by `z - 1`.
    keys: Vec<u64>,
}

impl PublicCoin {
    pub fn new(master_seed: u64, r: usize, m: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::param("r", "repetition count must be >= 1"));
        }
        if m == 0 {
            return Err(Error::param("m", "universe must be nonempty"));
        }
        let l_max = ceil_log2(m as u64);
        let levels = l_max as usize + 1;
        let mut keys = Vec::with_capacity(r * levels);
        for z in 1..=r as u64 {
            for l in 0..levels as u64 {
                keys.push(keyed_hash(master_seed, &[z, l]));
            }
        }
        Ok(Self {
            master_seed,
            r,
            m,
            l_max,
            keys,
        })
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l_max(&self) -> u32 {
        self.l_max
    }

    /// Is `j` in `S_l^z`? `z` is 1-based.
    pub fn in_sample(&self, z: usize, l: u32, j: usize) -> Result<bool> {
        if z == 0 || z > self.r {
            return Err(Error::param("z", format!("{z} not in [1, {}]", self.r)));
        }
        if l > self.l_max {
            return Err(Error::param("l", format!("{l} not in [0, {}]", self.l_max)));
        }
        if j >= self.m {
            return Err(Error::CoordinateOutOfRange { j, m: self.m });
        }
        Ok(self.member(z, l, j))
    }

    /// Unchecked membership for hot loops.
    #[inline]
    pub(crate) fn member(&self, z: usize, l: u32, j: usize) -> bool {
        if l == 0 {
            return true;
        }
        let key = self.keys[(z - 1) * (self.l_max as usize + 1) + l as usize];
        absorb(key, j as u64) >> (64 - l) == 0
    }
}

/// The level `l` with `2^l <= tau / (eta^p (1+gamma)^{p h} B) < 2^{l+1}`,
/// or 0 when the ratio is below 1; clamped to `l_max`.
pub fn level_of(h: i64, eta: f64, gamma: f64, p: f64, tau: f64, b: f64, l_max: u32) -> u32 {
    let weight = eta.powf(p) * (1.0 + gamma).powf(p * h as f64);
    level_for_ratio(tau / (weight * b), l_max)
}

pub(crate) fn level_for_ratio(ratio: f64, l_max: u32) -> u32 {
    if !(ratio >= 2.0) {
        return 0;
    }
    if ratio.is_infinite() {
        return l_max;
    }
    let mut l = ratio.log2().floor() as i64;
    // log2 may misround next to exact powers of two
    while l > 0 && 2f64.powi(l as i32) > ratio {
        l -= 1;
    }
    while 2f64.powi(l as i32 + 1) <= ratio {
        l += 1;
    }
    (l.max(0) as u32).min(l_max)
}
