//! Configuration, experiment runners and result files for the `sms` tool.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod output;
