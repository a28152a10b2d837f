//! Desk-scale multimodal GUI understanding stack.
//!
//! Three perceiver MLPs extract textual, graphical and spatial signals from a
//! toy vision backbone; a two-stage attention fusion gate weights them by the
//! question's semantics; a LoRA-adapted toy decoder answers. Around the model
//! sit a staged training harness, a synthetic GUI dataset forge and the
//! grounding/text metrics used to evaluate it.

pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
