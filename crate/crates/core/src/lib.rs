//! Core of the tabular-data chatbot generator.
//!
//! Everything here is pure computation over in-memory values so the crate
//! builds without `std`; file IO, CSV reading, HTTP and the CLI live in the
//! `tabot` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod dialogue;
pub mod fixtures;
pub mod generator;
pub mod ingest;
pub mod intent;
pub mod patterns;
pub mod query;
pub mod schema;
pub mod text;
