//! The `knoblab` command-line workflow and its HTTP service.
//!
//! Machine-readable outputs (manifests, sweep results, counterfactual
//! reports) are the same versioned JSON documents whether they come from a
//! subcommand or from the service; [`output::to_json`] is the one serializer
//! both use.

pub mod cli;
pub mod commands;
pub mod output;
pub mod parse;
pub mod service;

pub use cli::Cli;
