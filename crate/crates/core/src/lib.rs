//! Learned energy priors for linear inverse problems.
//!
//! Small dense networks define a scalar energy whose gradient is a
//! conservative score. They are trained by denoising score matching at one
//! or several noise scales and plugged into MAP reconstruction, solved by
//! gradient descent, by majorize-minimize with conjugate gradients, or by a
//! coarse-to-fine sequence of scales. Gaussian mixtures give exact smoothed
//! scores for checking all of it.

// Range checks are written `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod dsm;
pub mod energy;
pub mod error;
pub mod gmm;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod operators;
pub mod solvers;
pub mod tensor;

pub use error::{MuseError, Result};
pub use tensor::{Rng, Signal};
