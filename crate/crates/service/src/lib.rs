//! Conversational front end for a composed avatar: speech/LLM/TTS pipeline
//! stages, animation state, frame scheduling and the viewer wire protocol.

pub mod animator;
pub mod audio;
pub mod demo;
pub mod error;
pub mod pipeline;
pub mod protocol;
pub mod schedule;
pub mod server;
pub mod session;
pub mod stages;

pub use error::{Result, ServiceError};
pub use pipeline::{Pipeline, PipelineConfig, TurnInput};
pub use session::{handle_turn, Scene, SessionConfig, TurnResult};
