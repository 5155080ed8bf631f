//! Dense linear algebra, stable scalar nonlinearities and the seeded random source.

mod matrix;
mod rng;
mod scalar;

pub use matrix::Matrix;
pub use rng::Rng;
pub use scalar::{sigmoid, softplus};
