//! Fixtures shared by the criterion benches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvar_core::sim::{random_walk_paths, simulate_tvar};
use tvar_core::ReturnSeries;

/// A TV-AR(q) series of `periods` returns with slowly drifting coefficients,
/// sized like the monthly index sample.
pub fn drifting_series(periods: usize, q: usize, seed: u64) -> ReturnSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start: Vec<f64> = (0..q).map(|l| 0.3 / (l + 1) as f64).collect();
    let paths = random_walk_paths(&start, 1e-5, periods, &mut rng);
    simulate_tvar(0.004, &paths, 0.04, 100, &mut rng)
}
