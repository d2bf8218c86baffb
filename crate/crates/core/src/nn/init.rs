//! Parameter initializers.

use rand::Rng;

use crate::tensor::Tensor;

/// Standard normal sample (Box-Muller).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            return libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2);
        }
    }
}

/// Normal with the given std, resampled outside two standard deviations.
pub fn truncated_normal<R: Rng + ?Sized>(t: &mut Tensor, std: f64, rng: &mut R) {
    for v in t.data.iter_mut() {
        *v = loop {
            let z = standard_normal(rng);
            if z.abs() <= 2.0 {
                break z * std;
            }
        };
    }
}

/// He-normal for ReLU networks: std `sqrt(2 / fan_in)`.
pub fn he_normal<R: Rng + ?Sized>(t: &mut Tensor, fan_in: usize, rng: &mut R) {
    let std = libm::sqrt(2.0 / fan_in as f64);
    for v in t.data.iter_mut() {
        *v = standard_normal(rng) * std;
    }
}
