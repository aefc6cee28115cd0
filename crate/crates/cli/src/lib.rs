//! Pipeline stages, synthetic data and the end-to-end runner behind the
//! `replybank` command.

pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod stages;
pub mod synth;

pub use error::{exit_code, Invalid, StageError};
