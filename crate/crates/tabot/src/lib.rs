//! CSV loading, on-disk storage, the HTTP service and the command line
//! for bots generated by [`tabot_core`].

pub mod config;
pub mod csv_source;
pub mod eval;
pub mod fallback;
pub mod registry;
pub mod service;
pub mod store;

pub use tabot_core as core;
