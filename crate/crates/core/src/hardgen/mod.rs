//! Structured hard inputs and their exact evaluators.
//!
//! Every generator is a pure function of its parameters and seed. Each
//! instance keeps its hidden structure next to the raw site inputs so that
//! the raw part can be fed to a protocol blind while tests check answers
//! against the hidden part.

mod btx;
mod disj;
mod format;
mod gapmaj;

pub use btx::{
    btx_eval, btx_eval_hidden, btx_to_stream, gen_btx, xor_eval, BlockType, BtxBlock, BtxInstance,
};
pub use disj::{
    bit_disj_regime_warning, conditional_on_y, gen_bit_disj, gen_two_disj, sample_two_disj,
    BitDisjInstance, DisjInstance, DisjLabel,
};
pub use format::{read_instance, write_instance, HardInstance};
pub use gapmaj::{
    gap_maj_eval, gen_gap_maj, gen_quantile_instance, quantile_rep, GapMajInstance,
    QuantileInstance,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Three-way answer of a promise problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Zero,
    One,
    Star,
}

impl Verdict {
    pub fn as_bit(self) -> Option<bool> {
        match self {
            Verdict::Zero => Some(false),
            Verdict::One => Some(true),
            Verdict::Star => None,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Zero => "0",
            Verdict::One => "1",
            Verdict::Star => "*",
        })
    }
}

pub(crate) fn rng_for(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(crate::hashing::derive_seed(seed, &[tag]))
}
