//! Experiment driver for the two-layer ReLU³ PINN: configuration, training
//! grids, theory checks and their CSV/JSON/SVG output.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod output;
