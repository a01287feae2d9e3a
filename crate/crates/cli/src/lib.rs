//! Batch orchestration for scarlab: configuration, on-disk formats, run
//! manifests and the subcommand bodies behind the `scarlab` binary.

pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;
pub mod pipeline;
