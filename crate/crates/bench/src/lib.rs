//! Fixtures shared by the benchmarks.

use hsfusion_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn random(shape: &[usize], seed: u64) -> Tensor {
    Tensor::random_normal(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
