//! HTTP API and command-line front end for `canvas-core`.
//!
//! Both front ends are thin: [`ops`] holds one function per endpoint, the
//! router in [`http`] and the subcommands in [`cli`] only translate
//! requests and responses.

pub mod cli;
pub mod error;
pub mod http;
pub mod ops;
pub mod table;

pub use error::{ErrorBody, GatewayError};
