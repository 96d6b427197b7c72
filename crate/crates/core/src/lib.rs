//! Hierarchical intention-aware prediction of situated human behavior.
//!
//! Given a short history of gaze, head pose, hand positions and the
//! surrounding objects, the model first scores every object for upcoming
//! interaction, keeps the top-K candidates, then decodes future gaze, head
//! pose, hand and object-center trajectories plus refined interaction
//! probabilities.
//!
//! The crate is `no_std` (with `alloc`): it holds the numeric substrate,
//! the data model, the synthetic scene generator, the model, losses,
//! metrics and the training loop. File formats, IO and the command line
//! live in the `situate` companion crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod datamodel;
pub mod decoder;
pub mod dyngcn;
pub mod encoder;
mod error;
pub mod evalkit;
pub mod gradsuite;
pub mod numerics;
pub mod objective;
pub mod pipeline;
pub mod scenegen;
pub mod testutil;

pub use error::{Error, Result};
