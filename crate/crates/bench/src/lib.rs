//! Benchmark fixtures shared by the criterion targets.

use streamnet::io::synthetic::{generate_synthetic, SyntheticSpec};
use streamnet::rng::{seeded, uniform_tensor};
use streamnet::{Dataset, Shape, Tensor};

pub fn random_tensor(shape: Shape, seed: u64) -> Tensor {
    uniform_tensor(&mut seeded(seed), shape, -1.0, 1.0)
}

/// Small synthetic split at the desk-scale image size.
pub fn desk_data() -> (Dataset, Dataset) {
    generate_synthetic(&SyntheticSpec {
        train_per_class: 10,
        test_per_class: 5,
        ..SyntheticSpec::default()
    })
}
