//! Experiment plumbing behind the `navigan` binary: configuration, the
//! ingest/train/evaluate commands, and episode plotting.

pub mod commands;
pub mod config;
pub mod plot;
