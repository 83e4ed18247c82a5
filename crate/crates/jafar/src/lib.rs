//! File formats, chain archives and the command-line front end around `jafar-core`.

pub mod archive;
pub mod cli;
pub mod csvio;
pub mod error;
pub mod store;

pub use error::{Error, Result};
pub use jafar_core as model;
