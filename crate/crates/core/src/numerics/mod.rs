//! Dense matrices, seeded randomness, Adam, and finite-difference checks.

mod adam;
mod gradcheck;
mod mat;
mod rng;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{fd_gradient, max_relative_error};
pub use mat::{dot, norm2, Mat};
pub use rng::{derive_seed, Rng};

/// Glorot-uniform initialization: entries uniform on `[-b, b]`,
/// `b = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_init(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Mat {
    let b = xavier_bound(fan_in, fan_out);
    Mat::from_fn(fan_in, fan_out, |_, _| rng.uniform(-b, b))
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
