//! Seeded parameter initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{Param, ParamSet, Shape};

/// Weights uniform in `±1/√fan_in` (fan-in = matrix columns), biases zero.
///
/// Values are drawn from one ChaCha8 stream in lexicographic name order, so the
/// result depends only on the shapes and the seed.
pub fn init_params<S: AsRef<str>>(shapes: &[(S, Shape)], seed: u64) -> ParamSet {
    let mut set = ParamSet::zeros(shapes.iter().map(|(n, s)| (n.as_ref(), *s)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, p) in set.iter_mut() {
        if let Param::Matrix(m) = p {
            let bound = 1.0 / (m.cols() as f64).sqrt();
            for v in m.as_mut_slice() {
                *v = rng.gen_range(-bound..=bound);
            }
        }
    }
    set
}
