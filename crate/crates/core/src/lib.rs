pub mod boundary;
pub mod config;
pub mod error;
pub mod matrices;
pub mod mms;
pub mod par;
pub mod sbp;
pub mod solver;
pub mod state;
pub mod verify;

pub use error::{Error, Result};
