//! Command-line front end: problem configs, the benchmark registry and the
//! `verify`, `synthesize`, `scenario`, `simulate` and `export` commands.

pub mod config;
pub mod export;
pub mod registry;
pub mod run;
