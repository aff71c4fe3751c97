//! File formats, parallel drivers and the `mitescan` command line for
//! [`mitescan_core`].

pub mod annotations;
pub mod cli;
pub mod configs;
pub mod decoding;
pub mod detections;
pub mod error;
pub mod evaluation;
pub mod index;
pub mod plan;
pub mod render;
pub mod rten;

pub use error::{CliError, FormatError};
