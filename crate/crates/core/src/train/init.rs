use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::model::{FeedbackTopology, ModelConfig, ParamStore, PRELU_INIT};
use crate::tensor::{Real, Tensor};

/// Re-draws every weight from `Normal(0, sqrt(2 / fan_in))` with
/// `fan_in = dims[1] · kh · kw`, zeroes biases and resets PReLU slopes.
/// Tensors are visited in key order, so the result depends only on `seed`.
pub fn he_init<F: Real>(store: &mut ParamStore<F>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, t) in store.iter_mut() {
        let shape = t.shape();
        if name.ends_with(".weight") {
            let fan_in = (shape.c * shape.h * shape.w) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            t.data_mut().iter_mut().for_each(|v| *v = F::lit(normal.sample(&mut rng)));
        } else if name.ends_with(".alpha") {
            *t = Tensor::full(shape, F::lit(PRELU_INIT));
        } else {
            *t = Tensor::zeros(shape);
        }
    }
}

/// A freshly He-initialized store.
pub fn init_params<F: Real>(config: &ModelConfig, topology: &FeedbackTopology, seed: u64) -> Result<ParamStore<F>> {
    let mut store = ParamStore::new(config, topology)?;
    he_init(&mut store, seed);
    Ok(store)
}
