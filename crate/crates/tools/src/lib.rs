//! File formats and the command-line driver for [`dykstra`].
//!
//! - [`instance_io`]: JSON instances and dual states.
//! - [`tables`]: CSV matrices, vectors and traces.
//! - [`cli`]: the `dykstra` binary.

pub mod cli;
pub mod error;
pub mod instance_io;
pub mod tables;

pub use error::{Result, ToolError};
