//! Counter-based randomness.
//!
//! Every random draw in the crate is addressed by `(seed, stream, counter)`.
//! The ChaCha8 key comes from the seed, the stream selects the ChaCha nonce and
//! the counter positions the keystream, so any draw can be regenerated
//! independently of evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::Matrix;

/// Stream identifiers; one per logical consumer of randomness.
pub mod stream {
    pub const DATASET: u64 = 1;
    pub const TEACHER_BATCH: u64 = 2;
    pub const INIT: u64 = 3;
    pub const MLCD: u64 = 4;
    pub const ILCD: u64 = 5;
    pub const SELF_SAMPLE: u64 = 6;
    pub const REWARD: u64 = 7;
    pub const FAKE_SCORE: u64 = 8;
    pub const DFDM: u64 = 9;
    pub const GAN: u64 = 10;
    pub const EVAL: u64 = 11;
    pub const PROJECTIONS: u64 = 12;
    pub const GRADCHECK: u64 = 13;
    pub const PROJECTOR: u64 = 14;
    pub const TRUTH: u64 = 15;
}

/// Words of keystream reserved per counter value.
const WORDS_PER_COUNTER: u128 = 1 << 32;

/// Returns the generator positioned at `(seed, stream, counter)`.
pub fn stream_rng(seed: u64, stream: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(counter as u128 * WORDS_PER_COUNTER);
    rng
}

/// Mixes a sub-index into a counter so nested loops get disjoint counters.
pub fn sub_counter(counter: u64, sub: u64) -> u64 {
    counter.wrapping_mul(0x9E37_79B9).wrapping_add(sub) & ((1 << 36) - 1)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| standard_normal(rng)).collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn index<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    rng.random_range(0..n)
}
