//! Shared fixtures for the criterion benchmarks: deterministic interior
//! weight vectors and a reusable simulated panel configuration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dgp_core::panel::NormalizedPanel;
use dgp_core::simplex::sample_interior;
use dgp_core::simulator::{simulate, SimConfig};

/// A deterministic interior point of the `n`-simplex (coordinates ≥ 0.02/n).
pub fn fixture_theta(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(9000 + n as u64);
    sample_interior(&mut rng, n, 0.02).as_slice().to_vec()
}

/// A simulated 10-asset, 5-year daily panel used by the pipeline benchmarks.
pub fn fixture_panel() -> NormalizedPanel {
    let cfg = SimConfig::uniform(10, 5.0, 252, 0.05, 0.2).with_seed(77);
    simulate(&cfg)
        .expect("simulation succeeds")
        .normalized()
        .expect("panel normalizes")
}
