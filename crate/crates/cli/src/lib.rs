//! Support library for the `sqzcomb` binary: run configuration, the binary
//! trace format, and output-directory plumbing. Everything here is also the
//! tool's external contract, so integration tests drive it directly.

pub mod config;
pub mod outputs;
pub mod trace_io;
