pub mod bergman;
pub mod error;
pub mod fock;
pub mod localization;
pub mod matrix;
pub mod numerics;
pub mod weights;

pub use error::{Error, Result};
