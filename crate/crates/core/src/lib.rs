//! Preference-optimization toolkit core.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (only `alloc` is required). File formats, the CLI,
//! and thread pools live in the `prefrl` companion crate.
//!
//! Layout:
//!
//! - [`autodiff`]: dense `f64` tensors, a reverse-mode tape, and Adam.
//! - [`model`]: the toy sequence model shared by policy, critic, and reward model.
//! - [`reward`]: Bradley-Terry reward-model training and pairwise accuracy.
//! - [`rl`]: reward assignment, GAE, clipped policy loss, critic loss, and the PPO loop.
//! - [`sampling`]: ancestral sampling and best-of-N selection.
//! - [`datapipe`]: synthetic tasks, verifiers, pair construction, length filtering, cleaning.
//! - [`evalbench`]: benchmark accuracy reports and the length-bias probe.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod datapipe;
pub mod error;
pub mod evalbench;
pub mod model;
pub mod reward;
pub mod rl;
pub mod rng;
pub mod sampling;
pub mod vocab;

pub use error::{Error, Result};
