//! Blocks of k-XOR instances (k-BTX) and their stream encoding.

use rand::Rng;

use super::{rng_for, Verdict};
use crate::error::{Error, Result};
use crate::harness::StreamEvent;

const TAG_BTX: u64 = 0xB7C5;

/// Hidden type `S = (X, Y)` of a block's special column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockType {
    pub x: bool,
    pub y: bool,
}

impl BlockType {
    /// Exactly one half is set, so the special column holds `k/2` ones.
    pub fn is_xor(self) -> bool {
        self.x != self.y
    }

    pub fn index(self) -> usize {
        (self.x as usize) << 1 | self.y as usize
    }
}

impl std::fmt::Display for BlockType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.x as u8, self.y as u8)
    }
}

/// One k x n bit matrix stored column-wise as k-bit masks (bit `i` = site `i`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BtxBlock {
    pub cols: Vec<u64>,
    /// Site allowed to hold a 1 in each column.
    pub d: Vec<usize>,
    /// Special column.
    pub m: usize,
    pub s: BlockType,
}

impl BtxBlock {
    pub fn bit(&self, site: usize, col: usize) -> bool {
        self.cols[col] >> site & 1 == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtxInstance {
    pub k: usize,
    pub p: f64,
    pub eps: f64,
    pub seed: u64,
    /// Columns per block, `round(k^p)`.
    pub n: usize,
    /// `round(1/eps)`, used by the evaluator.
    pub inv_eps: usize,
    pub blocks: Vec<BtxBlock>,
}

impl BtxInstance {
    pub fn universe(&self) -> usize {
        self.blocks.len() * self.n
    }

    pub fn half_mask(&self) -> u64 {
        (1u64 << (self.k / 2)) - 1
    }

    pub fn full_mask(&self) -> u64 {
        if self.k == 64 {
            u64::MAX
        } else {
            (1u64 << self.k) - 1
        }
    }

    /// Number of blocks whose hidden type puts exactly `k/2` ones in the special column.
    pub fn xor_count_hidden(&self) -> usize {
        self.blocks.iter().filter(|b| b.s.is_xor()).count()
    }

    pub fn type_counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for b in &self.blocks {
            c[b.s.index()] += 1;
        }
        c
    }

    pub fn ones(&self) -> usize {
        self.blocks
            .iter()
            .flat_map(|b| &b.cols)
            .map(|c| c.count_ones() as usize)
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        check_k(self.k)?;
        let low = self.half_mask();
        let high = self.full_mask() & !low;
        for (bi, b) in self.blocks.iter().enumerate() {
            let bad = |what: String| Error::Structure(format!("block {bi}: {what}"));
            if b.cols.len() != self.n || b.d.len() != self.n {
                return Err(bad(format!("expected {} columns", self.n)));
            }
            if b.m >= self.n {
                return Err(bad(format!("special column {} out of range", b.m)));
            }
            for (c, (&col, &site)) in b.cols.iter().zip(&b.d).enumerate() {
                if col & !self.full_mask() != 0 {
                    return Err(bad(format!("column {c} has bits beyond site {}", self.k)));
                }
                if c == b.m {
                    let want = if b.s.x { low } else { 0 } | if b.s.y { high } else { 0 };
                    if col != want {
                        return Err(bad(format!("special column does not match type {}", b.s)));
                    }
                } else {
                    if site >= self.k {
                        return Err(bad(format!("column {c} names site {site}")));
                    }
                    if col & !(1u64 << site) != 0 {
                        return Err(bad(format!("column {c} has a 1 outside site {site}")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 || !k.is_power_of_two() || k > 64 {
        return Err(Error::param(
            "k",
            format!("need a power of two in [2, 64], got {k}"),
        ));
    }
    Ok(())
}

/// `round(1/eps^2)` blocks of `k x round(k^p)` matrices. In every ordinary
/// column a uniformly chosen site holds a fair bit and the rest hold 0; the
/// special column sets its first `k/2` rows to `X` and its last `k/2` to `Y`.
pub fn gen_btx(k: usize, p: f64, eps: f64, seed: u64) -> Result<BtxInstance> {
    check_k(k)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param("eps", format!("must lie in (0,1), got {eps}")));
    }
    if !(p > 0.0) {
        return Err(Error::param("p", format!("must be positive, got {p}")));
    }
    let n = (k as f64).powf(p).round() as usize;
    let n_blocks = (1.0 / (eps * eps)).round() as usize;
    let inv_eps = (1.0 / eps).round() as usize;
    let mut rng = rng_for(seed, TAG_BTX);
    let low = (1u64 << (k / 2)) - 1;
    let full = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let mut cols = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for _ in 0..n {
            let site = rng.random_range(0..k);
            let bit: bool = rng.random();
            d.push(site);
            cols.push((bit as u64) << site);
        }
        let m = rng.random_range(0..n);
        let s = BlockType {
            x: rng.random(),
            y: rng.random(),
        };
        cols[m] = if s.x { low } else { 0 } | if s.y { full & !low } else { 0 };
        blocks.push(BtxBlock { cols, d, m, s });
    }
    Ok(BtxInstance {
        k,
        p,
        eps,
        seed,
        n,
        inv_eps,
        blocks,
    })
}

/// 1 iff some column has exactly `k/2` ones.
pub fn xor_eval(cols: &[u64], k: usize) -> bool {
    let half = (k / 2) as u32;
    cols.iter().any(|c| c.count_ones() == half)
}

fn three_way(count: usize, n_blocks: usize, inv_eps: usize) -> Verdict {
    // |count - blocks/2| against 1/eps and 2/eps, in half-units to stay integral
    let dev = (2 * count).abs_diff(n_blocks);
    if dev >= 4 * inv_eps {
        Verdict::One
    } else if dev <= 2 * inv_eps {
        Verdict::Zero
    } else {
        Verdict::Star
    }
}

/// Gap decision on the number of blocks whose k-XOR is 1: 1 if it is at
/// least `2/eps` away from `1/(2 eps^2)`, 0 if within `1/eps`, otherwise `*`.
pub fn btx_eval(inst: &BtxInstance) -> Verdict {
    let count = inst
        .blocks
        .iter()
        .filter(|b| xor_eval(&b.cols, inst.k))
        .count();
    three_way(count, inst.blocks.len(), inst.inv_eps)
}

/// [`btx_eval`] computed from the hidden block types instead of the bits.
pub fn btx_eval_hidden(inst: &BtxInstance) -> Verdict {
    three_way(inst.xor_count_hidden(), inst.blocks.len(), inst.inv_eps)
}

/// One insertion of item `block * n + column` per 1-bit, site-major, then
/// block-major, then by column. The universe has `blocks * n` items.
pub fn btx_to_stream(inst: &BtxInstance) -> Vec<StreamEvent> {
    let mut out = Vec::with_capacity(inst.ones());
    for site in 0..inst.k {
        for (bi, b) in inst.blocks.iter().enumerate() {
            for (c, col) in b.cols.iter().enumerate() {
                if col >> site & 1 == 1 {
                    out.push(StreamEvent {
                        t: out.len() as u64,
                        site,
                        j: bi * inst.n + c,
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        let b = gen_btx(8, 2.0, 0.25, 1).unwrap();
        assert_eq!(b.blocks.len(), 16);
        assert_eq!(b.n, 64);
        assert_eq!(b.inv_eps, 4);
        b.validate().unwrap();
        assert!(gen_btx(6, 2.0, 0.25, 1).is_err());
    }

    #[test]
    fn ordinary_columns_have_at_most_one_one() {
        let b = gen_btx(16, 2.0, 0.2, 3).unwrap();
        for blk in &b.blocks {
            for (c, col) in blk.cols.iter().enumerate() {
                if c != blk.m {
                    assert!(col.count_ones() <= 1);
                }
            }
        }
    }

    #[test]
    fn type_11_special_column_is_all_ones() {
        let b = gen_btx(8, 2.0, 0.1, 11).unwrap();
        let mut seen = false;
        for blk in &b.blocks {
            if blk.s.x && blk.s.y {
                assert_eq!(blk.cols[blk.m], 0xFF);
                seen = true;
            }
        }
        assert!(seen);
    }

    #[test]
    fn xor_eval_examples() {
        assert!(!xor_eval(&[0, 0, 0], 4));
        assert!(xor_eval(&[0, 0b0110, 0], 4));
        assert!(!xor_eval(&[0b1111], 4));
    }

    #[test]
    fn three_way_examples() {
        // 16 blocks, 1/eps = 4: centre 8
        assert_eq!(three_way(8, 16, 4), Verdict::Zero);
        assert_eq!(three_way(16, 16, 4), Verdict::One);
        assert_eq!(three_way(0, 16, 4), Verdict::One);
        // centre + 1.5/eps = 14
        assert_eq!(three_way(14, 16, 4), Verdict::Star);
        assert_eq!(three_way(12, 16, 4), Verdict::Zero);
    }

    #[test]
    fn hidden_and_raw_evaluation_agree() {
        for seed in 0..50 {
            let b = gen_btx(8, 2.0, 0.25, seed).unwrap();
            assert_eq!(btx_eval(&b), btx_eval_hidden(&b));
        }
    }

    #[test]
    fn stream_conserves_ones() {
        let b = gen_btx(4, 2.0, 0.5, 2).unwrap();
        let s = btx_to_stream(&b);
        assert_eq!(s.len(), b.ones());
        assert!(s.windows(2).all(|w| w[0].site <= w[1].site));
        assert!(s.iter().all(|e| e.j < b.universe()));
    }

    #[test]
    fn all_zero_instance_gives_empty_stream() {
        let mut b = gen_btx(4, 2.0, 0.5, 2).unwrap();
        for blk in &mut b.blocks {
            blk.cols.iter_mut().for_each(|c| *c = 0);
        }
        assert!(btx_to_stream(&b).is_empty());
    }

    #[test]
    fn validator_catches_stray_one() {
        let mut b = gen_btx(8, 2.0, 0.25, 5).unwrap();
        let blk = &mut b.blocks[0];
        let c = (blk.m + 1) % b.n;
        let other = (blk.d[c] + 1) % 8;
        blk.cols[c] ^= 1 << other;
        assert!(b.validate().is_err());
    }
}
