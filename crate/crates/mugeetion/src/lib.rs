//! Runtime for the mugeetion gesture-to-music engine: FaceOSC over UDP,
//! session files, training data, the threaded engine, its control API and
//! the command-line tool.

pub mod api;
pub mod config;
pub mod engine;
pub mod files;
pub mod queue;
pub mod session;
pub mod sinks;
pub mod synth;
pub mod training;
pub mod udp;

pub use config::{load_config, EngineConfig, InputSpec};
pub use engine::{Ack, ControlCommand, ControlError, Engine, EngineHandle, Pipeline, RunSummary, Snapshot};
pub use session::Speed;
