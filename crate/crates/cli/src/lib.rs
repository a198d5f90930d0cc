//! Command-line front end for `pwh-core`: analysis reports, trajectory and
//! phase-plane CSV files, SVG phase plots and parameter sweeps.

pub mod commands;
pub mod csvio;
pub mod error;
pub mod parse;
pub mod report;
pub mod svg;
