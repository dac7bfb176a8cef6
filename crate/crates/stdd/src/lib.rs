//! Space-time cross attention video encoding, knowledge-graph prompt
//! augmentation, and video-prompt alignment, small enough to run and
//! verify on a desk machine.
//!
//! The crate is organized around a tape-based autodiff core ([`tensor`])
//! on top of which sit the masked dynamic-token machinery ([`wsm`]),
//! multi-scale channel mixing ([`mcm`]), the video encoder
//! ([`encoder`]), prompt construction from parsed relation graphs
//! ([`askg`]), similarity scoring and losses ([`alignment`]), and the
//! measurement harness ([`bench`]).

pub mod alignment;
pub mod askg;
pub mod bench;
pub mod config;
pub mod encoder;
pub mod error;
pub mod mcm;
pub mod synth;
pub mod tensor;
pub mod wsm;

pub use error::{Error, Result};
