//! Journal-backed store, HTTP API and command line for the fmrec engine.

pub mod api;
pub mod cli;
pub mod formats;
pub mod store;
