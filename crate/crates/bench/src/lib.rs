//! Fixtures shared by the benchmarks.

use fnn_core::network::FnnConfig;
use fnn_core::simulate::{generate, SimScenario};
use fnn_core::FunctionalDataset;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One draw of a simulation scenario with `n` observations.
pub fn scenario_data(id: u8, n: usize, seed: u64) -> (SimScenario, FunctionalDataset) {
    let sc = SimScenario {
        n_obs: n,
        ..SimScenario::preset(id).expect("preset scenario")
    };
    let data = generate(&sc, &mut ChaCha8Rng::seed_from_u64(seed))
        .expect("scenario generates")
        .dataset;
    (sc, data)
}

/// Default network for the scenario, trimmed to `epochs`.
pub fn short_config(sc: &SimScenario, epochs: usize) -> FnnConfig {
    FnnConfig {
        epochs,
        ..sc.default_fnn_config()
    }
}
