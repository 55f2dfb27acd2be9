//! Deterministic numerical substrate shared by every other module.

mod adam;
mod gradcheck;
mod matrix;
mod normal;
mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_grad, max_relative_error, relative_error};
pub use matrix::Matrix;
pub use normal::{inverse_normal_cdf, normal_cdf};
pub use rng::{standard_normal, RngStream};
