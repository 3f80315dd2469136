//! Pipeline orchestration for the `viewscore` command-line tool.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod synth;

pub use commands::{run, Cli};
