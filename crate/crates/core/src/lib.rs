#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub(crate) mod prelude {
    pub use alloc::boxed::Box;
    pub use alloc::format;
    pub use alloc::string::String;
    #[allow(unused_imports)]
    pub use alloc::vec;
    pub use alloc::vec::Vec;
    #[allow(unused_imports)]
    pub use num_traits::Float;
}

pub mod config;
pub mod copula;
pub mod data;
pub mod dist;
pub mod error;
pub mod fit;
pub mod gibbs;
pub mod linalg;
pub mod metrics;
pub mod postprocess;
pub mod predict;
pub mod rng;
pub mod sim;
pub mod special;
pub mod state;

pub use error::{Error, Result, Step};
pub use rng::{RngStream, StreamFactory, VarKind};
