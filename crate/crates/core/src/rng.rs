//! Seeded randomness.
//!
//! All stochastic choices (initialization, shuffling, noise masks) draw from
//! xoshiro256++ streams. Independent streams are keyed with [`sub_seed`], a
//! splitmix64 mix of a base seed and an index, so a draw never depends on the
//! order in which other streams were consumed.

use rand::{Rng, SeedableRng};
pub use rand_xoshiro::Xoshiro256PlusPlus as Rng64;

use crate::tensor::{Shape, Tensor};

pub fn seeded(seed: u64) -> Rng64 {
    Rng64::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for stream `index` under `seed`.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Child seed keyed by a short label, e.g. a purpose tag.
pub fn labeled_seed(seed: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(splitmix64(seed), |acc, b| splitmix64(acc ^ u64::from(b)))
}

pub fn uniform_tensor(rng: &mut Rng64, shape: Shape, lo: f64, hi: f64) -> Tensor {
    let data = (0..shape.len()).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}
