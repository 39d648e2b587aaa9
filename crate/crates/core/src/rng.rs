//! Seed handling. Every stochastic routine derives its generator from a
//! root seed plus a stream index, so parallel workers stay reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream identifiers, so unrelated consumers of one seed never overlap.
pub mod streams {
    pub const MASK: u64 = 1;
    pub const L1_RESTART: u64 = 1 << 20;
    pub const OBS_RESTART: u64 = 2 << 20;
    pub const MC_BLOCK: u64 = 3 << 20;
    pub const HUM_INIT: u64 = 4 << 20;
    pub const LANCZOS: u64 = 5 << 20;
    pub const PROBE: u64 = 6 << 20;
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniformly distributed point on the unit sphere of dimension `n`.
pub fn unit_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian_vec(rng, n);
        let norm = crate::linalg::norm(&v);
        if norm > 1e-300 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}
