//! Temporary build scaffold.
pub mod distributions;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod models;
pub mod samples;
pub(crate) mod util;
pub use error::{Error, Result};
