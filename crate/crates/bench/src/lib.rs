//! Fixtures shared by the benchmarks.

use nscr_core::{generate, Dataset, HyperParams, ModelParameters, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random ID vector and `v` attribute vectors of width `k`.
pub fn pooling_inputs(k: usize, v: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || (0..k).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let id = draw();
    let attrs = (0..v).map(|_| draw()).collect();
    (id, attrs)
}

/// Default synthetic bundle with freshly initialised parameters.
pub fn model_fixture(k: usize, layers: usize) -> (Dataset, ModelParameters) {
    let data = generate(&SyntheticSpec::default()).expect("default spec is feasible");
    let hp = HyperParams {
        embedding_size: k,
        num_hidden_layers: layers,
        ..HyperParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = ModelParameters::init(
        data.num_users(),
        data.num_items(),
        data.attributes.num_attributes(),
        &hp,
        &mut rng,
    );
    (data, params)
}
