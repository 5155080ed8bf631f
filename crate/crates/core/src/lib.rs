//! Forward-only neural network training with layer-local goodness objectives.
//!
//! Every layer is trained on its own: a positive pass over inputs carrying the
//! true class in their first ten components pushes the layer's goodness (sum of
//! squared ReLU activations) above a threshold, and a negative pass over the
//! same inputs carrying a wrong class pushes it below. The collaborative
//! variants add a weighted sum of the other layers' goodness to each layer's
//! objective, with the coupling strength either held fixed or learned.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. File IO, the command line and metrics export live in `cff-lab`.
//!
//! # Feature flags
//! - **`std`** (default): lets the matrix kernels pick SIMD paths at runtime.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod collab;
pub mod data;
mod error;
pub mod eval;
pub mod ff;
pub mod math;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use math::{Matrix, Rng};

/// Number of classes, and of leading input components used for the label.
pub const NUM_CLASSES: usize = 10;
