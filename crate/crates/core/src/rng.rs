//! Seeded randomness for reproducible runs.
//!
//! Every randomized operation takes an explicit RNG so parallel runs and
//! re-runs under the same seed are bit-identical. ChaCha keeps the stream
//! stable across platforms.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The crate's deterministic RNG.
pub type SeededRng = ChaCha12Rng;

/// Builds the deterministic RNG for `seed`.
pub fn seed_rng(seed: u64) -> SeededRng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Draws a smoothing variable tau uniform on (0, 1].
///
/// The open lower end keeps smoothed p-values strictly positive, so betting
/// martingale log-updates stay finite.
pub fn draw_tau<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}
