//! Runtime for a voice agent that reasons before acting and grows its tool
//! set on demand.

pub mod bench;
pub mod clock;
pub mod codec;
pub mod datagen;
pub mod io;
pub mod judge;
pub mod model;
pub mod orchestrator;
pub mod policy;
pub mod tool_space;
