use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Real, Shape, Tensor};

/// Uniform Glorot initialisation for a conv weight `(Cout, Cin, k, k)`:
/// values in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`,
/// `fan_in = Cin·k·k`, `fan_out = Cout·k·k`.
pub fn xavier_init<T: Real>(shape: Shape, seed: u64) -> Tensor<T> {
    let receptive = shape.h() * shape.w();
    let fan_in = shape.c() * receptive;
    let fan_out = shape.n() * receptive;
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.random_range(-bound..=bound)))
}
