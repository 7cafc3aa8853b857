//! Seeded random streams.
//!
//! Every parallel estimator splits its work into a fixed number of chunks and
//! gives chunk `i` the ChaCha stream `i` under the caller's seed, so results do
//! not depend on the thread count.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Number of independent streams work is split over.
pub const CHUNKS: usize = 64;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Circularly symmetric CN(0, 1) variate.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Split `total` into `CHUNKS` near-equal counts.
pub(crate) fn chunk_sizes(total: usize) -> Vec<usize> {
    let base = total / CHUNKS;
    let extra = total % CHUNKS;
    (0..CHUNKS).map(|i| base + usize::from(i < extra)).collect()
}
