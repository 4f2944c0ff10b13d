//! Configuration-driven runner for echo simulations.

pub mod commands;
pub mod config;
pub mod output;
pub mod presets;
