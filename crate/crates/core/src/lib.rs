//! CTC phoneme recognizers with an alignment penalty and teacher-student
//! distillation, evaluated for output latency and mispronunciation detection
//! on a seeded synthetic corpus of scripted single-word prompts.

pub mod binio;
pub mod ctc;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pipeline;

pub use error::{Error, Result};
