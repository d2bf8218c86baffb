//! Destruction-reconstruction self-supervised image fusion.
//!
//! This crate is `no_std` (it needs `alloc`) and holds every algorithmic
//! piece of the pipeline: the three subregion destruction transforms and
//! their probabilistic combination, a CNN + two-level transformer
//! encoder-decoder with hand-written backpropagation, the composite
//! reconstruction loss, an AdamW optimizer with cosine annealing, the
//! feature-map fusion rules, and fusion-quality metrics.
//!
//! File formats, dataset scanning, checkpoints and the command line live in
//! the `transfuse` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod destruct;
mod error;
pub mod filter;
pub mod fuse;
pub mod image;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use image::{Image, Plane};
pub use tensor::{FeatureMap, Tensor, TokenSequence};
