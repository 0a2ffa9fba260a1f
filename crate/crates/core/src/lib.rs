//! Masked auto-encoder GAN for synthetic tabular data.
//!
//! The generator is an encoder/decoder pair that reconstructs a full encoded
//! row from a partially revealed one (a *hint*) plus noise; the critic is a
//! Wasserstein discriminator conditioned on the same mask. Rows are generated
//! one component at a time by growing the mask.

// `!(x > 0.0)` style checks are used to reject NaN alongside bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autograd;
pub mod codec;
pub mod error;
pub mod losses;
pub mod masking;
pub mod model;
pub mod nets;
pub mod optim;
pub mod stats;
pub mod synthesis;
pub mod training;

pub use error::{Error, Result};
pub use model::TaeganModel;
pub use training::{train, TrainConfig};
