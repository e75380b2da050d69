//! CLI and HTTP service over the recommendation engine.

pub mod commands;
pub mod config;
pub mod service;
